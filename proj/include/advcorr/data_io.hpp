#pragma once

// IDX (MNIST) reader/writer, synthetic datasets, JSON checkpoints and
// serialized adversarial sets.

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "advcorr/attacks.hpp"
#include "advcorr/errors.hpp"
#include "advcorr/nn.hpp"
#include "advcorr/violation.hpp"

namespace advcorr {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// IDX

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (off + 4 > b.size())
    throw DataError(path + ": truncated header at byte offset " + std::to_string(off) + " (file has " +
                    std::to_string(b.size()) + " bytes)");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

inline void put_be32(std::ostream& os, std::uint32_t v) {
  const char buf[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
  os.write(buf, 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Read an uncompressed IDX image/label file pair. Pixels are divided by 255
/// and each image is flattened row-major into one column of the input matrix.
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                               int num_classes = 10) {
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);

  const auto im_magic = detail::be32(img, 0, images_path);
  if (im_magic != kIdxImagesMagic) {
    std::ostringstream os;
    os << images_path << ": bad magic 0x" << std::hex << std::setw(8) << std::setfill('0') << im_magic
       << " at byte offset 0 (expected 0x00000803)";
    throw DataError(os.str());
  }
  const auto lb_magic = detail::be32(lab, 0, labels_path);
  if (lb_magic != kIdxLabelsMagic) {
    std::ostringstream os;
    os << labels_path << ": bad magic 0x" << std::hex << std::setw(8) << std::setfill('0') << lb_magic
       << " at byte offset 0 (expected 0x00000801)";
    throw DataError(os.str());
  }
  const std::size_t n_img = detail::be32(img, 4, images_path);
  const std::size_t rows = detail::be32(img, 8, images_path);
  const std::size_t cols = detail::be32(img, 12, images_path);
  const std::size_t n_lab = detail::be32(lab, 4, labels_path);
  if (n_img != n_lab)
    throw DataError("count mismatch: " + images_path + " has " + std::to_string(n_img) + " images at byte offset 4, " +
                    labels_path + " has " + std::to_string(n_lab) + " labels at byte offset 4");
  const std::size_t dim = rows * cols;
  if (dim == 0) throw DataError(images_path + ": zero image dimension at byte offset 8");
  const std::size_t need_img = 16 + n_img * dim;
  if (img.size() < need_img)
    throw DataError(images_path + ": truncated payload at byte offset " + std::to_string(img.size()) + " (expected " +
                    std::to_string(need_img) + " bytes)");
  if (lab.size() < 8 + n_lab)
    throw DataError(labels_path + ": truncated payload at byte offset " + std::to_string(lab.size()) + " (expected " +
                    std::to_string(8 + n_lab) + " bytes)");

  Matrix X(static_cast<Index>(dim), static_cast<Index>(n_img));
  std::vector<int> y(n_img);
  for (std::size_t n = 0; n < n_img; ++n) {
    for (std::size_t p = 0; p < dim; ++p)
      X(static_cast<Index>(p), static_cast<Index>(n)) = static_cast<double>(img[16 + n * dim + p]) / 255.0;
    y[n] = lab[8 + n];
    if (y[n] >= num_classes)
      throw DataError(labels_path + ": label " + std::to_string(y[n]) + " out of range at byte offset " +
                      std::to_string(8 + n));
  }
  return LabeledDataset(std::move(X), std::move(y), num_classes);
}

/// Write an IDX pair from raw bytes (used for fixtures).
inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      const std::vector<std::vector<unsigned char>>& images, std::uint32_t rows, std::uint32_t cols,
                      const std::vector<unsigned char>& labels) {
  std::ofstream im(images_path, std::ios::binary), lb(labels_path, std::ios::binary);
  if (!im || !lb) throw DataError("cannot open IDX output files for writing");
  detail::put_be32(im, kIdxImagesMagic);
  detail::put_be32(im, static_cast<std::uint32_t>(images.size()));
  detail::put_be32(im, rows);
  detail::put_be32(im, cols);
  for (const auto& i : images) {
    if (i.size() != std::size_t{rows} * cols) throw ShapeError("write_idx: image size mismatch");
    im.write(reinterpret_cast<const char*>(i.data()), static_cast<std::streamsize>(i.size()));
  }
  detail::put_be32(lb, kIdxLabelsMagic);
  detail::put_be32(lb, static_cast<std::uint32_t>(labels.size()));
  lb.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

/// Standard file names inside an MNIST directory.
inline std::pair<LabeledDataset, LabeledDataset> load_mnist_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  if (!fs::is_directory(d)) throw DataError("dataset directory not found: " + dir);
  return {load_idx((d / "train-images-idx3-ubyte").string(), (d / "train-labels-idx1-ubyte").string()),
          load_idx((d / "t10k-images-idx3-ubyte").string(), (d / "t10k-labels-idx1-ubyte").string())};
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class SyntheticKind { gaussian_blobs, two_moons };

inline const char* to_string(SyntheticKind k) { return k == SyntheticKind::gaussian_blobs ? "gaussian_blobs" : "two_moons"; }

struct SyntheticConfig {
  SyntheticKind kind = SyntheticKind::gaussian_blobs;
  int n_per_class = 100;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  int input_dim = 2;
  int num_classes = 2;  // two_moons always has 2

  void validate() const {
    if (n_per_class < 1) throw ConfigError("synthetic n_per_class must be >= 1");
    if (!(noise_std >= 0.0)) throw ConfigError("synthetic noise_std must be >= 0");
    if (input_dim < 2) throw ConfigError("synthetic input_dim must be >= 2");
    if (kind == SyntheticKind::gaussian_blobs && num_classes < 2) throw ConfigError("synthetic num_classes must be >= 2");
  }
};

/// Class centers of the blob generator, already in [0.2, 0.8]^input_dim.
inline Matrix blob_centers(const SyntheticConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  Matrix c(cfg.input_dim, cfg.num_classes);
  for (Index k = 0; k < c.cols(); ++k)
    for (Index m = 0; m < c.rows(); ++m) c(m, k) = u(rng);
  return c;
}

/// Deterministic in the seed. Points are squashed into [0,1] by clipping;
/// two_moons lives in the first two coordinates with the rest held at 0.5.
inline LabeledDataset make_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int C = cfg.kind == SyntheticKind::two_moons ? 2 : cfg.num_classes;
  const auto N = static_cast<Index>(cfg.n_per_class) * C;
  Matrix X(cfg.input_dim, N);
  std::vector<int> y(static_cast<std::size_t>(N));
  const Matrix centers = cfg.kind == SyntheticKind::gaussian_blobs ? blob_centers(cfg) : Matrix();
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  for (Index n = 0; n < N; ++n) {
    const int k = static_cast<int>(n / cfg.n_per_class);
    y[static_cast<std::size_t>(n)] = k;
    if (cfg.kind == SyntheticKind::gaussian_blobs) {
      for (Index m = 0; m < X.rows(); ++m) X(m, n) = centers(m, k) + cfg.noise_std * noise(rng);
    } else {
      const double t = angle(rng);
      // Moons on [-1,2]x[-0.5,1], mapped affinely into [0.1,0.9]^2.
      double a = k == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double b = k == 0 ? std::sin(t) : 0.5 - std::sin(t);
      a += cfg.noise_std * noise(rng);
      b += cfg.noise_std * noise(rng);
      X(0, n) = 0.1 + 0.8 * (a + 1.0) / 3.0;
      X(1, n) = 0.1 + 0.8 * (b + 0.5) / 1.5;
      for (Index m = 2; m < X.rows(); ++m) X(m, n) = 0.5;
    }
  }
  X = X.cwiseMax(0.0).cwiseMin(1.0);
  return LabeledDataset(std::move(X), std::move(y), C);
}

// ---------------------------------------------------------------------------
// Checksums and encodings

/// FNV-1a 64 over the architecture widths and the little-endian parameter bytes.
inline std::uint64_t model_checksum(const Network& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  for (Index w : net.architecture().widths()) mix(static_cast<std::uint64_t>(w));
  const ParamVector p = net.to_params();
  for (Index j = 0; j < p.size(); ++j) mix(std::bit_cast<std::uint64_t>(p.values(j)));
  return h;
}

inline std::uint64_t dataset_checksum(const LabeledDataset& d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  for (Index j = 0; j < d.inputs().size(); ++j) mix(std::bit_cast<std::uint64_t>(d.inputs().data()[j]));
  for (int l : d.labels()) mix(static_cast<std::uint64_t>(l));
  return h;
}

inline std::string checksum_hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace detail {

inline constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<unsigned char>& in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < in.size(); i += 3) {
    const std::uint32_t b0 = in[i], b1 = i + 1 < in.size() ? in[i + 1] : 0, b2 = i + 2 < in.size() ? in[i + 2] : 0;
    const std::uint32_t v = (b0 << 16) | (b1 << 8) | b2;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < in.size() ? kB64[(v >> 6) & 63] : '=';
    out += i + 2 < in.size() ? kB64[v & 63] : '=';
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (s.size() % 4 != 0) throw DataError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = s[i + static_cast<std::size_t>(k)];
      if (c == '=' && i + 4 == s.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else if (pad > 0 || (v[k] = val(c)) < 0) {
        throw DataError("corrupt base64 payload at character " + std::to_string(i + static_cast<std::size_t>(k)));
      }
    }
    const std::uint32_t w = (std::uint32_t(v[0]) << 18) | (std::uint32_t(v[1]) << 12) | (std::uint32_t(v[2]) << 6) |
                            std::uint32_t(v[3]);
    out.push_back(static_cast<unsigned char>(w >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(w >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(w));
  }
  return out;
}

inline std::string encode_f64_base64(const double* p, std::size_t n) {
  std::vector<unsigned char> bytes(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = std::bit_cast<std::uint64_t>(p[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(u >> (8 * b));
  }
  return base64_encode(bytes);
}

inline std::vector<double> decode_f64_base64(const std::string& s) {
  const auto bytes = base64_decode(s);
  if (bytes.size() % 8 != 0) throw DataError("base64 float payload is not a whole number of doubles");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= std::uint64_t{bytes[i * 8 + static_cast<std::size_t>(b)]} << (8 * b);
    out[i] = std::bit_cast<double>(u);
  }
  return out;
}

// nlohmann renders doubles with max_digits10 and parses them back exactly.
inline json encode_array(const double* p, std::size_t n, bool base64) {
  if (base64) return encode_f64_base64(p, n);
  return std::vector<double>(p, p + n);
}

inline std::vector<double> decode_array(const json& j, bool base64, const std::string& what) {
  try {
    if (base64) {
      if (!j.is_string()) throw DataError(what + ": expected a base64 string");
      return decode_f64_base64(j.get<std::string>());
    }
    if (!j.is_array()) throw DataError(what + ": expected an array of numbers");
    return j.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointFormat = "advcorr-ckpt-1";

enum class FloatEncoding { decimal, base64 };

struct CheckpointMeta {
  std::uint64_t seed = 0;
  json config = json::object();
  std::string dataset_checksum;
};

struct Checkpoint {
  Network net;
  CheckpointMeta meta;
  std::string checksum;
};

inline json checkpoint_to_json(const Network& net, const CheckpointMeta& meta, FloatEncoding enc = FloatEncoding::decimal) {
  const bool b64 = enc == FloatEncoding::base64;
  json layers = json::array();
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& L = net.layer(l);
    // Row-major weights.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> W = L.weights;
    layers.push_back({{"rows", L.weights.rows()},
                      {"cols", L.weights.cols()},
                      {"activation", l + 1 < net.depth() ? "relu" : "identity"},
                      {"weights", detail::encode_array(W.data(), static_cast<std::size_t>(W.size()), b64)},
                      {"biases", detail::encode_array(L.biases.data(), static_cast<std::size_t>(L.biases.size()), b64)}});
  }
  return {{"format_version", kCheckpointFormat},
          {"encoding", b64 ? "base64" : "decimal"},
          {"architecture", {{"widths", net.architecture().widths()}}},
          {"layers", std::move(layers)},
          {"metadata", {{"seed", meta.seed}, {"config", meta.config}, {"dataset_checksum", meta.dataset_checksum}}},
          {"model_checksum", checksum_hex(model_checksum(net))}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (!j.is_object() || !j.contains("format_version")) throw DataError("checkpoint: missing format_version");
    const auto ver = j.at("format_version").get<std::string>();
    if (ver != kCheckpointFormat)
      throw DataError("checkpoint: unsupported format_version '" + ver + "' (expected " + kCheckpointFormat + ")");
    const auto enc = j.at("encoding").get<std::string>();
    if (enc != "decimal" && enc != "base64") throw DataError("checkpoint: unknown encoding '" + enc + "'");
    const bool b64 = enc == "base64";
    const auto widths = j.at("architecture").at("widths").get<std::vector<int>>();
    if (widths.size() < 2) throw DataError("checkpoint: architecture needs at least input and output widths");
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() + 1 != widths.size())
      throw DataError("checkpoint: layer count does not match architecture");
    std::vector<DenseLayer> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      const auto rows = L.at("rows").get<Index>(), cols = L.at("cols").get<Index>();
      if (rows != widths[l + 1] || cols != widths[l])
        throw DataError("checkpoint: layer " + std::to_string(l) + " shape does not match architecture");
      const auto w = detail::decode_array(L.at("weights"), b64, "checkpoint layer " + std::to_string(l) + " weights");
      const auto b = detail::decode_array(L.at("biases"), b64, "checkpoint layer " + std::to_string(l) + " biases");
      if (w.size() != static_cast<std::size_t>(rows * cols) || b.size() != static_cast<std::size_t>(rows))
        throw DataError("checkpoint: layer " + std::to_string(l) + " parameter count does not match its shape");
      DenseLayer d;
      d.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), rows, cols);
      d.biases = Eigen::Map<const Vector>(b.data(), rows);
      out.push_back(std::move(d));
    }
    Checkpoint c{Network(std::move(out)), {}, {}};
    const auto& m = j.at("metadata");
    c.meta.seed = m.at("seed").get<std::uint64_t>();
    c.meta.config = m.at("config");
    c.meta.dataset_checksum = m.at("dataset_checksum").get<std::string>();
    c.checksum = checksum_hex(model_checksum(c.net));
    const auto recorded = j.at("model_checksum").get<std::string>();
    if (recorded != c.checksum)
      throw DataError("checkpoint: model checksum mismatch (recorded " + recorded + ", computed " + c.checksum + ")");
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed document: ") + e.what());
  } catch (const ShapeError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const DomainError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << j.dump(1) << '\n';
  if (!os) throw DataError("failed writing " + path);
}

inline json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void save_checkpoint(const Network& net, const CheckpointMeta& meta, const std::string& path,
                            FloatEncoding enc = FloatEncoding::decimal) {
  write_json_file(checkpoint_to_json(net, meta, enc), path);
}

inline Checkpoint load_checkpoint_full(const std::string& path) { return checkpoint_from_json(read_json_file(path)); }

inline Network load_checkpoint(const std::string& path) { return load_checkpoint_full(path).net; }

// ---------------------------------------------------------------------------
// Adversarial sets

struct AdversarialSet {
  std::vector<AdversarialExample> examples;
  AttackConfig attack;
  std::string model_checksum;
  json config = json::object();
};

inline json attack_to_json(const AttackConfig& a) {
  return {{"kind", to_string(a.kind)},
          {"epsilon", a.epsilon},
          {"step_size", a.step_size},
          {"iterations", a.iterations},
          {"seed", a.seed}};
}

inline AttackConfig attack_from_json(const json& j) {
  AttackConfig a;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "pgd") a.kind = AttackKind::pgd;
  else if (kind == "fgsm") a.kind = AttackKind::fgsm;
  else throw ConfigError("unknown attack kind '" + kind + "'");
  a.epsilon = j.at("epsilon").get<double>();
  a.step_size = j.at("step_size").get<double>();
  a.iterations = j.at("iterations").get<int>();
  a.seed = j.value("seed", std::uint64_t{0});
  a.validate();
  return a;
}

inline json adversarial_set_to_json(const AdversarialSet& s, FloatEncoding enc = FloatEncoding::decimal) {
  const bool b64 = enc == FloatEncoding::base64;
  json ex = json::array();
  for (const auto& e : s.examples)
    ex.push_back({{"x", detail::encode_array(e.x_tilde.data(), static_cast<std::size_t>(e.x_tilde.size()), b64)},
                  {"y", e.y},
                  {"source_index", e.source_index},
                  {"violation", e.violation_at_gen}});
  return {{"format_version", "advcorr-adv-1"},
          {"encoding", b64 ? "base64" : "decimal"},
          {"epsilon", s.attack.epsilon},
          {"attack", attack_to_json(s.attack)},
          {"model_checksum", s.model_checksum},
          {"config", s.config},
          {"size", s.examples.size()},
          {"examples", std::move(ex)}};
}

inline AdversarialSet adversarial_set_from_json(const json& j) {
  try {
    if (j.value("format_version", std::string()) != "advcorr-adv-1")
      throw DataError("adversarial set: unsupported or missing format_version");
    const bool b64 = j.at("encoding").get<std::string>() == "base64";
    AdversarialSet s;
    s.attack = attack_from_json(j.at("attack"));
    s.model_checksum = j.at("model_checksum").get<std::string>();
    s.config = j.value("config", json::object());
    const auto& ex = j.at("examples");
    if (!ex.is_array()) throw DataError("adversarial set: examples must be an array");
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const auto x = detail::decode_array(ex[i].at("x"), b64, "adversarial example " + std::to_string(i));
      AdversarialExample e;
      e.x_tilde = Eigen::Map<const Vector>(x.data(), static_cast<Index>(x.size()));
      e.y = ex[i].at("y").get<int>();
      e.source_index = ex[i].at("source_index").get<std::size_t>();
      e.violation_at_gen = ex[i].at("violation").get<double>();
      s.examples.push_back(std::move(e));
    }
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("adversarial set: malformed document: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("adversarial set: ") + e.what());
  }
}

inline void save_adversarial_set(const AdversarialSet& s, const std::string& path,
                                 FloatEncoding enc = FloatEncoding::decimal) {
  write_json_file(adversarial_set_to_json(s, enc), path);
}

inline AdversarialSet load_adversarial_set(const std::string& path) {
  return adversarial_set_from_json(read_json_file(path));
}

}  // namespace advcorr
