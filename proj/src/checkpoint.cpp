// Copyright (c) 2026 The MultiFiT-kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "multifit/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "multifit/errors.hpp"

namespace multifit {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ULL;
  return h;
}

namespace {

constexpr char kMagic[4] = {'M', 'F', 'I', 'T'};
constexpr std::string_view kMomentPrefix[2] = {"optim.m/", "optim.v/"};

template <typename UInt>
void put(std::string& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  if (name.size() > 0xffff) throw CheckpointError("tensor name too long: " + name.substr(0, 40) + "...");
  if (t.rank() > 0xff) throw CheckpointError("tensor '" + name + "' has too many axes");
  put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out += name;
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (Index d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (Index i = 0; i < t.size(); ++i) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(t[i]));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename UInt>
  UInt get() {
    need(sizeof(UInt));
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
      v |= static_cast<UInt>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(UInt);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError(source_ + ": payload ends unexpectedly");
  }

  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string hexfloat(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ",") + x;
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto c = s.find(',', start);
    out.push_back(s.substr(start, c - start));
    if (c == std::string::npos) return out;
    start = c + 1;
  }
}

int group_of(const std::string& name, const ModelConfig& cfg) {
  if (name == "encoder.embedding") return 0;
  constexpr std::string_view layer = "encoder.layer";
  if (name.rfind(layer, 0) == 0) {
    const auto dot = name.find('.', layer.size());
    return std::stoi(name.substr(layer.size(), dot - layer.size())) + 1;
  }
  return cfg.n_groups() - 1;
}

bool is_buffer(const std::string& name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

void check_list_item(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(",\n\r") != std::string::npos)
    throw CheckpointError(std::string(what) + " '" + s + "' cannot be stored (empty or contains ',' or a newline)");
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& cp) {
  std::string text = cp.config.to_text();
  std::vector<std::string> aliases;
  for (const auto& [alias, target] : cp.params.aliases()) aliases.push_back(alias + ":" + target);
  for (const auto& c : cp.meta.class_names) check_list_item(c, "class name");
  text += "checkpoint.kind = " + cp.meta.kind + "\n";
  text += "checkpoint.stage = " + cp.meta.stage + "\n";
  text += "checkpoint.epoch = " + std::to_string(cp.meta.epoch) + "\n";
  text += "checkpoint.step = " + std::to_string(cp.meta.step) + "\n";
  text += "checkpoint.classes = " + join(cp.meta.class_names) + "\n";
  text += "checkpoint.tokenizer_hash = " + cp.meta.tokenizer_hash + "\n";
  text += "checkpoint.aliases = " + join(aliases) + "\n";
  if (cp.optimizer) {
    text += "checkpoint.optimizer_step = " + std::to_string(cp.optimizer->step) + "\n";
    text += "checkpoint.beta1_product = " + hexfloat(cp.optimizer->beta1_product) + "\n";
  }

  std::size_t count = cp.params.size();
  if (cp.optimizer) {
    if (cp.optimizer->m.size() != count || cp.optimizer->v.size() != count)
      throw CheckpointError("optimizer state does not cover the parameter set");
    count *= 3;
  }

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(count));
  for (const auto& e : cp.params) put_tensor(out, e.name, e.value);
  if (cp.optimizer)
    for (int k = 0; k < 2; ++k) {
      const auto& moments = k == 0 ? cp.optimizer->m : cp.optimizer->v;
      for (std::size_t i = 0; i < cp.params.size(); ++i)
        put_tensor(out, std::string(kMomentPrefix[k]) + cp.params.entry(i).name, moments[i]);
    }
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source) {
  // A file cut inside the magic is a truncation; any differing byte is not a checkpoint.
  if (std::memcmp(bytes.data(), kMagic, std::min<std::size_t>(bytes.size(), 4)) != 0)
    throw BadMagicError(source + ": not a checkpoint (bad magic)");
  if (bytes.size() >= 8) {
    Reader r(bytes.substr(4, 4), source);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
      throw BadVersionError(source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                            std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 16) throw ChecksumError(source + ": checksum mismatch (file truncated)");
  const std::string_view payload = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8), source);
  if (tail.get<std::uint64_t>() != fnv1a64(payload))
    throw ChecksumError(source + ": checksum mismatch (file truncated or corrupted)");

  Reader r(payload.substr(8), source);
  const auto text_len = r.get<std::uint64_t>();
  const std::string text(r.take(static_cast<std::size_t>(text_len)));

  Checkpoint cp;
  std::vector<std::string> aliases;
  std::optional<long> opt_step;
  std::optional<double> beta1_product;
  {
    std::istringstream in(text);
    std::string line;
    std::ostringstream config_lines;
    while (std::getline(in, line)) {
      const auto eq = line.find(" = ");
      if (line.rfind("checkpoint.", 0) != 0 || eq == std::string::npos) {
        config_lines << line << "\n";
        continue;
      }
      const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
      try {
        if (key == "checkpoint.kind") cp.meta.kind = value;
        else if (key == "checkpoint.stage") cp.meta.stage = value;
        else if (key == "checkpoint.epoch") cp.meta.epoch = std::stoi(value);
        else if (key == "checkpoint.step") cp.meta.step = std::stoll(value);
        else if (key == "checkpoint.classes") cp.meta.class_names = split_commas(value);
        else if (key == "checkpoint.tokenizer_hash") cp.meta.tokenizer_hash = value;
        else if (key == "checkpoint.aliases") aliases = split_commas(value);
        else if (key == "checkpoint.optimizer_step") opt_step = std::stol(value);
        else if (key == "checkpoint.beta1_product") beta1_product = std::strtod(value.c_str(), nullptr);
        else throw CheckpointError(source + ": unknown checkpoint key '" + key + "'");
      } catch (const std::logic_error&) {
        throw CheckpointError(source + ": bad value for '" + key + "'");
      }
    }
    std::istringstream cfg_in(config_lines.str());
    try {
      apply_config_text(cp.config, cfg_in, source + " (config)");
    } catch (const ConfigError& e) {
      throw CheckpointError(e.what());
    }
  }
  if (cp.meta.kind != "lm" && cp.meta.kind != "classifier")
    throw CheckpointError(source + ": unknown model kind '" + cp.meta.kind + "'");

  const auto count = r.get<std::uint32_t>();
  std::vector<std::pair<std::string, Tensor<float>>> moments;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name(r.take(name_len));
    const auto rank = r.get<std::uint8_t>();
    Shape shape;
    for (int d = 0; d < rank; ++d) shape.push_back(static_cast<Index>(r.get<std::uint32_t>()));
    Tensor<float> t(shape);
    const std::string_view data = r.take(static_cast<std::size_t>(t.size()) * 4);
    Reader dr(data, source);
    for (Index i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(dr.get<std::uint32_t>());
    if (name.rfind("optim.", 0) == 0) {
      moments.emplace_back(std::move(name), std::move(t));
      continue;
    }
    if (cp.params.contains(name)) throw CheckpointError(source + ": duplicate tensor '" + name + "'");
    const int group = group_of(name, cp.config.model);
    cp.params.add(name, std::move(t), group, !is_buffer(name));
  }
  if (!r.at_end()) throw CheckpointError(source + ": trailing bytes after the last tensor");
  for (const auto& a : aliases) {
    const auto colon = a.find(':');
    if (colon == std::string::npos) throw CheckpointError(source + ": malformed alias '" + a + "'");
    try {
      cp.params.tie(a.substr(0, colon), a.substr(colon + 1));
    } catch (const ContractError& e) {
      throw CheckpointError(source + ": cannot restore alias '" + a + "': " + e.what());
    }
  }

  if (!moments.empty() || opt_step) {
    if (!opt_step || !beta1_product || moments.size() != 2 * cp.params.size())
      throw CheckpointError(source + ": incomplete optimizer state");
    Adam<float>::State st;
    st.step = *opt_step;
    st.beta1_product = *beta1_product;
    st.m.resize(cp.params.size());
    st.v.resize(cp.params.size());
    for (auto& [name, t] : moments) {
      const bool is_m = name.rfind(kMomentPrefix[0], 0) == 0;
      const std::string target = name.substr(kMomentPrefix[0].size());
      if (!is_m && name.rfind(kMomentPrefix[1], 0) != 0)
        throw CheckpointError(source + ": unknown optimizer tensor '" + name + "'");
      if (!cp.params.contains(target) || cp.params.entry(cp.params.index_of(target)).name != target)
        throw CheckpointError(source + ": optimizer tensor '" + name + "' has no parameter");
      const std::size_t idx = cp.params.index_of(target);
      if (t.shape() != cp.params.entry(idx).value.shape())
        throw CheckpointError(source + ": optimizer tensor '" + name + "' has the wrong shape");
      (is_m ? st.m : st.v)[idx] = std::move(t);
    }
    for (std::size_t i = 0; i < cp.params.size(); ++i)
      if (st.m[i].empty() || st.v[i].empty())
        throw CheckpointError(source + ": missing optimizer moments for '" + cp.params.entry(i).name + "'");
    cp.optimizer = std::move(st);
  }
  return cp;
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  const std::string bytes = serialize_checkpoint(cp);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, path);
}

}  // namespace multifit
