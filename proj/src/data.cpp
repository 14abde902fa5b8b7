#include "dalab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dalab/rng.hpp"

namespace dalab {

namespace {

int64_t sample_width(const Dataset& ds) {
  return ds.size() > 0 ? ds.x.numel() / ds.size() : 0;
}

Shape row_shape(const Shape& full, int64_t n) {
  Shape s = full;
  s[0] = n;
  return s;
}

}  // namespace

Batch Dataset::batch(const std::vector<int64_t>& indices) const {
  Batch b;
  b.labels.reserve(indices.size());
  for (int64_t i : indices) b.labels.push_back(labels[static_cast<size_t>(i)]);
  if (is_text()) {
    b.seq_len = seq_len;
    b.tokens.reserve(indices.size() * static_cast<size_t>(seq_len));
    for (int64_t i : indices)
      b.tokens.insert(b.tokens.end(), tokens.begin() + i * seq_len,
                      tokens.begin() + (i + 1) * seq_len);
  } else {
    const int64_t w = sample_width(*this);
    Tensor bx(row_shape(x.shape, static_cast<int64_t>(indices.size())));
    for (size_t r = 0; r < indices.size(); ++r)
      std::copy(x.data.begin() + indices[r] * w, x.data.begin() + (indices[r] + 1) * w,
                bx.data.begin() + static_cast<int64_t>(r) * w);
    b.x = std::move(bx);
  }
  return b;
}

Dataset Dataset::take(const std::vector<int64_t>& indices, const std::string& tag) const {
  Dataset out;
  out.classes = classes;
  out.split_tag = tag;
  out.provenance = provenance;
  out.seq_len = seq_len;
  out.labels.reserve(indices.size());
  for (int64_t i : indices) out.labels.push_back(labels[static_cast<size_t>(i)]);
  if (is_text()) {
    for (int64_t i : indices)
      out.tokens.insert(out.tokens.end(), tokens.begin() + i * seq_len,
                        tokens.begin() + (i + 1) * seq_len);
  } else if (!indices.empty()) {
    const int64_t w = sample_width(*this);
    Tensor nx(row_shape(x.shape, static_cast<int64_t>(indices.size())));
    for (size_t r = 0; r < indices.size(); ++r)
      std::copy(x.data.begin() + indices[r] * w, x.data.begin() + (indices[r] + 1) * w,
                nx.data.begin() + static_cast<int64_t>(r) * w);
    out.x = std::move(nx);
  }
  return out;
}

namespace {

uint32_t read_be32(std::istream& in, const std::string& path, int64_t offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw std::runtime_error("truncated IDX file " + path + " at byte offset " +
                             std::to_string(offset));
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open IDX image file " + images_path);
  const uint32_t img_magic = read_be32(img, images_path, 0);
  if (img_magic != 0x00000803u) {
    std::ostringstream os;
    os << "bad IDX image magic in " << images_path << ": found 0x" << std::hex << img_magic
       << ", expected 0x803";
    throw std::runtime_error(os.str());
  }
  const int64_t n = read_be32(img, images_path, 4);
  const int64_t rows = read_be32(img, images_path, 8);
  const int64_t cols = read_be32(img, images_path, 12);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open IDX label file " + labels_path);
  const uint32_t lab_magic = read_be32(lab, labels_path, 0);
  if (lab_magic != 0x00000801u) {
    std::ostringstream os;
    os << "bad IDX label magic in " << labels_path << ": found 0x" << std::hex << lab_magic
       << ", expected 0x801";
    throw std::runtime_error(os.str());
  }
  const int64_t nl = read_be32(lab, labels_path, 4);
  if (n != nl)
    throw std::runtime_error("IDX image/label count mismatch: " + std::to_string(n) + " vs " +
                             std::to_string(nl));

  Dataset ds;
  ds.classes = 10;
  ds.provenance = images_path + ";" + labels_path;
  ds.x = Tensor({n, 1, rows, cols});
  std::vector<unsigned char> buf(static_cast<size_t>(n * rows * cols));
  img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (img.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::runtime_error("truncated IDX file " + images_path + " at byte offset " +
                             std::to_string(16 + img.gcount()));
  for (size_t i = 0; i < buf.size(); ++i) ds.x.data[i] = static_cast<double>(buf[i]) / 255.0;

  std::vector<unsigned char> lbuf(static_cast<size_t>(n));
  lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(lbuf.size()));
  if (lab.gcount() != static_cast<std::streamsize>(lbuf.size()))
    throw std::runtime_error("truncated IDX file " + labels_path + " at byte offset " +
                             std::to_string(8 + lab.gcount()));
  ds.labels.assign(lbuf.begin(), lbuf.end());
  for (int y : ds.labels)
    if (y >= ds.classes)
      throw std::runtime_error("IDX label " + std::to_string(y) + " out of range");
  return ds;
}

void write_mnist_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
  if (ds.is_text() || ds.x.shape.size() != 4)
    throw std::invalid_argument("write_mnist_idx requires an image dataset");
  const int64_t n = ds.size(), rows = ds.x.shape[2], cols = ds.x.shape[3];
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot write " + images_path);
  write_be32(img, 0x00000803u);
  write_be32(img, static_cast<uint32_t>(n));
  write_be32(img, static_cast<uint32_t>(rows));
  write_be32(img, static_cast<uint32_t>(cols));
  for (double v : ds.x.data) {
    const double clamped = std::min(1.0, std::max(0.0, v));
    const unsigned char b = static_cast<unsigned char>(std::lround(clamped * 255.0));
    img.write(reinterpret_cast<const char*>(&b), 1);
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot write " + labels_path);
  write_be32(lab, 0x00000801u);
  write_be32(lab, static_cast<uint32_t>(n));
  for (int y : ds.labels) {
    const unsigned char b = static_cast<unsigned char>(y);
    lab.write(reinterpret_cast<const char*>(&b), 1);
  }
}

Dataset gen_two_moons(int64_t n, double noise, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("two-moons needs n >= 2");
  if (noise < 0.0) throw std::invalid_argument("two-moons noise must be >= 0");
  Rng rng(seed);
  Dataset ds;
  ds.classes = 2;
  ds.provenance = "two_moons(n=" + std::to_string(n) + ",noise=" + std::to_string(noise) +
                  ",seed=" + std::to_string(seed) + ")";
  ds.x = Tensor({n, 2});
  ds.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = rng.uniform(0.0, 3.141592653589793);
    double px, py;
    if (label == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
    }
    ds.x.data[static_cast<size_t>(2 * i)] = px + noise * rng.normal();
    ds.x.data[static_cast<size_t>(2 * i + 1)] = py + noise * rng.normal();
    ds.labels[static_cast<size_t>(i)] = label;
  }
  return ds;
}

Dataset gen_text_synthetic(int64_t vocab, int64_t length, int64_t n, uint64_t seed) {
  if (vocab < 4) throw std::invalid_argument("text vocab must be >= 4");
  if (length < 2) throw std::invalid_argument("text length must be >= 2");
  if (n < 2) throw std::invalid_argument("text dataset needs n >= 2");
  Rng rng(seed);
  Dataset ds;
  ds.classes = 2;
  ds.seq_len = length;
  ds.provenance = "text_synthetic(vocab=" + std::to_string(vocab) +
                  ",length=" + std::to_string(length) + ",n=" + std::to_string(n) +
                  ",seed=" + std::to_string(seed) + ")";
  ds.tokens.resize(static_cast<size_t>(n * length));
  ds.labels.resize(static_cast<size_t>(n));
  constexpr int kMarkerA = 1, kMarkerB = 2;
  for (int64_t i = 0; i < n; ++i) {
    int* row = ds.tokens.data() + i * length;
    for (int64_t t = 0; t < length; ++t)
      row[t] = 3 + static_cast<int>(rng.below(static_cast<uint64_t>(vocab - 3)));
    int64_t p1 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(length)));
    int64_t p2 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(length - 1)));
    if (p2 >= p1) ++p2;
    if (p1 > p2) std::swap(p1, p2);
    const int label = static_cast<int>(rng.below(2));
    row[p1] = label == 1 ? kMarkerA : kMarkerB;
    row[p2] = label == 1 ? kMarkerB : kMarkerA;
    ds.labels[static_cast<size_t>(i)] = label;
  }
  return ds;
}

Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset CSV " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty dataset CSV " + path);
  const bool text = header.rfind("label,t", 0) == 0;
  if (!text && header.rfind("label,f", 0) != 0)
    throw std::runtime_error("dataset CSV header must start with label,f0 or label,t0: " + path);

  Dataset ds;
  ds.provenance = path;
  std::vector<double> feats;
  int64_t width = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 2) throw std::runtime_error("short row in dataset CSV " + path);
    if (width < 0) width = static_cast<int64_t>(vals.size()) - 1;
    if (static_cast<int64_t>(vals.size()) - 1 != width)
      throw std::runtime_error("ragged row in dataset CSV " + path);
    ds.labels.push_back(static_cast<int>(vals[0]));
    for (size_t i = 1; i < vals.size(); ++i) feats.push_back(vals[i]);
  }
  if (ds.labels.empty()) throw std::runtime_error("no rows in dataset CSV " + path);
  ds.classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  if (ds.classes < 2) ds.classes = 2;
  if (text) {
    ds.seq_len = width;
    ds.tokens.reserve(feats.size());
    for (double v : feats) ds.tokens.push_back(static_cast<int>(v));
  } else {
    ds.x = Tensor({static_cast<int64_t>(ds.labels.size()), width}, std::move(feats));
  }
  return ds;
}

void write_csv_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset CSV " + path);
  const int64_t w = ds.is_text() ? ds.seq_len : (ds.size() ? ds.x.numel() / ds.size() : 0);
  out << "label";
  for (int64_t i = 0; i < w; ++i) out << (ds.is_text() ? ",t" : ",f") << i;
  out << "\n";
  char buf[32];
  for (int64_t r = 0; r < ds.size(); ++r) {
    out << ds.labels[static_cast<size_t>(r)];
    for (int64_t c = 0; c < w; ++c) {
      if (ds.is_text()) {
        out << "," << ds.tokens[static_cast<size_t>(r * w + c)];
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", ds.x.data[static_cast<size_t>(r * w + c)]);
        out << "," << buf;
      }
    }
    out << "\n";
  }
}

SplitResult split(const Dataset& ds, double f_train, double f_val, double f_test, uint64_t seed) {
  if (f_train < 0 || f_val < 0 || f_test < 0 ||
      std::fabs(f_train + f_val + f_test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  std::vector<int64_t> idx(static_cast<size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const int64_t n = ds.size();
  const int64_t n_train = static_cast<int64_t>(std::llround(f_train * static_cast<double>(n)));
  const int64_t n_val = static_cast<int64_t>(std::llround(f_val * static_cast<double>(n)));
  SplitResult out;
  out.train = ds.take({idx.begin(), idx.begin() + n_train}, "train");
  out.val = ds.take({idx.begin() + n_train, idx.begin() + std::min(n, n_train + n_val)}, "val");
  out.test = ds.take({idx.begin() + std::min(n, n_train + n_val), idx.end()}, "test");
  return out;
}

Dataset subsample(const Dataset& ds, int64_t k, uint64_t seed) {
  if (k > ds.size())
    throw std::invalid_argument("subsample size " + std::to_string(k) + " exceeds pool " +
                                std::to_string(ds.size()));
  std::vector<int64_t> idx(static_cast<size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(static_cast<size_t>(k));
  return ds.take(idx, ds.split_tag);
}

}  // namespace dalab
