#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kgbilm/seqbuild/vocab.hpp"
#include "kgbilm/trainer/train.hpp"

namespace kgbilm {

inline constexpr const char* kCheckpointFormat = "kgbilm-checkpoint-1";

/// Directory layout: manifest.txt (key=value), params.bin (little-endian
/// float32 arrays concatenated in manifest order), vocab.tsv.
struct Checkpoint {
  TrainConfig config;
  Vocab vocab;
  TrainState state;
};

namespace detail {

inline void put_f32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

inline float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<float>(bits);
}

struct ArrayEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;  // in floats
};

template <class F>
void for_each_checkpoint_array(TrainState& s, F&& f) {
  s.params.for_each([&](const std::string& n, Tensor& t, bool) { f(n, t); });
  s.adam.m.for_each([&](const std::string& n, Tensor& t, bool) { f("adam_m." + n, t); });
  s.adam.v.for_each([&](const std::string& n, Tensor& t, bool) { f("adam_v." + n, t); });
}

inline std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("checkpoint: write failed for " + p.string());
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg, const Vocab& vocab,
                            const TrainState& state) {
  std::filesystem::create_directories(dir);
  auto& s = const_cast<TrainState&>(state);
  std::string manifest = std::string("format=") + kCheckpointFormat + "\n";
  manifest += "step=" + std::to_string(state.step()) + "\n";
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(vocab.content_hash()));
  manifest += std::string("vocab_hash=") + hash + "\n";
  manifest += "vocab_size=" + std::to_string(vocab.size()) + "\n";
  const std::size_t tail = std::min(cfg.log_tail, state.history.size());
  for (std::size_t i = state.history.size() - tail; i < state.history.size(); ++i) {
    manifest += "loss=" + format_loss_line(state.history[i]) + "\n";
  }
  std::istringstream cfg_lines(config_to_text(cfg));
  for (std::string line; std::getline(cfg_lines, line);) manifest += "config." + line + "\n";

  std::string blob;
  std::size_t offset = 0;
  detail::for_each_checkpoint_array(s, [&](const std::string& name, Tensor& t) {
    manifest += "array=" + name + " " + detail::shape_text(t.shape()) + " " + std::to_string(offset) + "\n";
    for (float v : t.storage()) detail::put_f32(blob, v);
    offset += t.size();
  });
  manifest += "floats=" + std::to_string(offset) + "\n";
  detail::write_file(dir / "params.bin", blob);
  detail::write_file(dir / "vocab.tsv", vocab.to_text());
  detail::write_file(dir / "manifest.txt", manifest);
}

namespace detail {

inline LossRecord parse_loss_line(const std::string& text) {
  LossRecord r;
  std::istringstream in(text);
  if (!(in >> r.step >> r.lr >> r.kmp >> r.cgsa >> r.total)) throw DataError("checkpoint: bad loss line '" + text + "'");
  return r;
}

inline Shape parse_shape(const std::string& text) {
  Shape s;
  std::istringstream in(text);
  for (std::string part; std::getline(in, part, 'x');) s.push_back(parse_number<std::size_t>("shape", part));
  return s;
}

}  // namespace detail

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const std::string manifest = detail::read_file(dir / "manifest.txt");
  Checkpoint ck;
  std::string format, vocab_hash;
  std::size_t step = 0, vocab_size = 0, floats = 0;
  bool have_floats = false;
  std::vector<detail::ArrayEntry> arrays;
  std::istringstream in(manifest);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("manifest.txt:" + std::to_string(lineno) + ": expected key=value");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "format") {
        format = value;
      } else if (key == "step") {
        step = detail::parse_number<std::size_t>(key, value);
      } else if (key == "vocab_hash") {
        vocab_hash = value;
      } else if (key == "vocab_size") {
        vocab_size = detail::parse_number<std::size_t>(key, value);
      } else if (key == "loss") {
        ck.state.history.push_back(detail::parse_loss_line(value));
      } else if (key.rfind("config.", 0) == 0) {
        apply_setting(ck.config, key.substr(7) + "=" + value);
      } else if (key == "array") {
        std::istringstream parts(value);
        detail::ArrayEntry a;
        std::string shape, offset;
        if (!(parts >> a.name >> shape >> offset)) throw DataError("malformed array entry");
        a.shape = detail::parse_shape(shape);
        a.offset = detail::parse_number<std::size_t>("offset", offset);
        arrays.push_back(std::move(a));
      } else if (key == "floats") {
        floats = detail::parse_number<std::size_t>(key, value);
        have_floats = true;
      } else {
        throw DataError("unknown key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw DataError("manifest.txt:" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("manifest.txt:" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (format != kCheckpointFormat) throw DataError("checkpoint: unsupported format '" + format + "'");
  if (!have_floats) throw DataError("checkpoint: manifest lacks floats= line (truncated?)");

  const std::string vocab_text = detail::read_file(dir / "vocab.tsv");
  std::istringstream vin(vocab_text);
  ck.vocab = Vocab::parse(vin, (dir / "vocab.tsv").string());
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(ck.vocab.content_hash()));
  if (vocab_hash != hash) {
    throw DataError("checkpoint: vocab hash mismatch (manifest " + vocab_hash + ", vocab.tsv " + hash + ")");
  }
  if (vocab_size != ck.vocab.size()) throw DataError("checkpoint: vocab size mismatch");

  const std::string blob = detail::read_file(dir / "params.bin");
  if (blob.size() != floats * 4) {
    throw DataError("checkpoint: params.bin has " + std::to_string(blob.size()) + " bytes, manifest expects " +
                    std::to_string(floats * 4));
  }

  ck.config.validate();
  ck.state = [&] {
    TrainState s = init_train_state(ck.config, ck.vocab.size());
    s.history = std::move(ck.state.history);
    return s;
  }();
  std::size_t k = 0;
  std::size_t expected_offset = 0;
  detail::for_each_checkpoint_array(ck.state, [&](const std::string& name, Tensor& t) {
    if (k >= arrays.size()) throw DataError("checkpoint: manifest lists too few arrays");
    const auto& a = arrays[k++];
    if (a.name != name || a.shape != t.shape() || a.offset != expected_offset) {
      throw DataError("checkpoint: array '" + a.name + "' " + detail::shape_text(a.shape) + " does not match expected '" +
                      name + "' " + detail::shape_text(t.shape()));
    }
    if ((a.offset + t.size()) * 4 > blob.size()) throw DataError("checkpoint: params.bin too short for " + name);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = detail::get_f32(blob.data() + 4 * (a.offset + i));
    expected_offset += t.size();
  });
  if (k != arrays.size()) throw DataError("checkpoint: manifest lists extra arrays");
  if (expected_offset != floats) throw DataError("checkpoint: float count mismatch");
  ck.state.adam.step = step;
  return ck;
}

}  // namespace kgbilm
