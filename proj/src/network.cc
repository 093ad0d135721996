// Copyright (c) 2026 The ska-tdnn Authors. All Rights Reserved.
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

#include "ska/network.h"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ska/error.h"

namespace ska {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'K', 'A', 'T', 'D', 'N', 'N', '\0'};
constexpr uint32_t kCheckpointVersion = 1;

std::string JoinInts(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int64_t> SplitInts(const std::string& text) {
  std::vector<int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError("expected an integer list, got '" + text + "'");
    }
  }
  return out;
}

template <typename T>
void Put(std::string& out, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}
  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string GetString(size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void GetDoubles(double* dst, size_t n) {
    Need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError(path_ + " is truncated");
  }
  std::string bytes_;
  std::string path_;
  size_t pos_ = 0;
};

Tensor ConvWeight(ParameterStore& store, const std::string& name, int64_t out,
                  int64_t in) {
  return store.AddKaiming(name, {out, in, 1}, in);
}

}  // namespace

std::string VariantName(Variant v) {
  switch (v) {
    case Variant::kEcapaMsSka: return "ecapa_msska";
    case Variant::kEcapaCnnFwSka: return "ecapa_cnn_fwska";
    case Variant::kEcapaCnnFcwSka: return "ecapa_cnn_fcwska";
    case Variant::kSkaTdnn: return "ska_tdnn";
  }
  return "unknown";
}

Variant ParseVariant(const std::string& name) {
  for (Variant v : {Variant::kEcapaMsSka, Variant::kEcapaCnnFwSka,
                    Variant::kEcapaCnnFcwSka, Variant::kSkaTdnn}) {
    if (VariantName(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

NetworkConfig NetworkConfig::Full(Variant variant) {
  NetworkConfig c;
  c.variant = variant;
  return c;
}

NetworkConfig NetworkConfig::Toy(Variant variant) {
  NetworkConfig c;
  c.variant = variant;
  c.toy_scale_factor = 16;
  c.scale_count = 4;
  c.embedding_dim = 64;
  return c;
}

int64_t NetworkConfig::front_freq_out() const {
  int64_t f = mel_bins;
  for (int64_t s : front_freq_strides) f = (f - 1) / s + 1;
  return f;
}

int64_t NetworkConfig::tdnn_input() const {
  return has_front() ? front(front_channels.size() - 1) * front_freq_out()
                     : mel_bins;
}

void NetworkConfig::Validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (toy_scale_factor < 1) fail("toy_scale_factor must be >= 1");
  if (tdnn_channels < 1 || tdnn_channels % toy_scale_factor != 0) {
    fail("toy_scale_factor must divide tdnn_channels");
  }
  if (scale_count < 1 || tdnn() % scale_count != 0) {
    fail("scale_count " + std::to_string(scale_count) +
         " must divide the TDNN width " + std::to_string(tdnn()));
  }
  if (tdnn() % 2 != 0) fail("TDNN width must be even");
  if (embedding_dim < 1) fail("embedding_dim must be >= 1");
  if (attention_dim < 1) fail("attention_dim must be >= 1");
  if (mel_bins < 1) fail("mel_bins must be >= 1");
  if (has_front()) {
    if (front_channels.size() != front_freq_strides.size() + 1 ||
        front_freq_strides.empty()) {
      fail("front_channels needs one stem width plus one width per stride");
    }
    for (int64_t c : front_channels) {
      if (c < 1 || c % toy_scale_factor != 0) {
        fail("toy_scale_factor must divide every front width");
      }
    }
    for (int64_t s : front_freq_strides) {
      if (s < 1) fail("front strides must be >= 1");
    }
  }
}

std::string NetworkConfig::ToText() const {
  std::ostringstream os;
  os << "variant=" << VariantName(variant) << '\n'
     << "tdnn_channels=" << tdnn_channels << '\n'
     << "scale_count=" << scale_count << '\n'
     << "front_channels=" << JoinInts(front_channels) << '\n'
     << "front_freq_strides=" << JoinInts(front_freq_strides) << '\n'
     << "embedding_dim=" << embedding_dim << '\n'
     << "attention_dim=" << attention_dim << '\n'
     << "toy_scale_factor=" << toy_scale_factor << '\n'
     << "mel_bins=" << mel_bins << '\n';
  return os.str();
}

uint64_t Fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t NetworkConfig::Digest() const { return Fnv1a64(ToText()); }

NetworkConfig ConfigFromText(const std::string& text) {
  NetworkConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad config line: " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto integer = [&]() {
      try {
        return static_cast<int64_t>(std::stoll(value));
      } catch (const std::exception&) {
        throw ConfigError("expected an integer for " + key);
      }
    };
    if (key == "variant") c.variant = ParseVariant(value);
    else if (key == "tdnn_channels") c.tdnn_channels = integer();
    else if (key == "scale_count") c.scale_count = integer();
    else if (key == "front_channels") c.front_channels = SplitInts(value);
    else if (key == "front_freq_strides") c.front_freq_strides = SplitInts(value);
    else if (key == "embedding_dim") c.embedding_dim = integer();
    else if (key == "attention_dim") c.attention_dim = integer();
    else if (key == "toy_scale_factor") c.toy_scale_factor = integer();
    else if (key == "mel_bins") c.mel_bins = integer();
    else throw ConfigError("unknown network key " + key);
  }
  c.Validate();
  return c;
}

AttentiveStatsPool::AttentiveStatsPool(ParameterStore& store,
                                       const std::string& name,
                                       int64_t channels, int64_t attention_dim)
    : w1(ConvWeight(store, name + ".attention.weight", attention_dim,
                    3 * channels)),
      b1(store.AddConstant(name + ".attention.bias", {attention_dim}, 0.0)),
      w2(ConvWeight(store, name + ".score.weight", channels, attention_dim)),
      b2(store.AddConstant(name + ".score.bias", {channels}, 0.0)),
      bn(store, name + ".bn", attention_dim) {}

Tensor AttentiveStatsPool::Forward(const Tensor& h, const ForwardContext& ctx,
                                   Array* weights, bool uniform) {
  if (h.rank() != 3 || h.dim(2) < 2) {
    throw ContractError("pooling expects (B, D, T) with T >= 2, got " +
                        ShapeString(h.shape()));
  }
  const int64_t frames = h.dim(2);
  Tensor w;
  if (uniform) {
    w = Tensor::Constant(Array(h.shape(), 1.0 / static_cast<double>(frames)));
  } else {
    Tensor mean = op::Mean(h, 2);
    Tensor var = op::Sub(op::Mean(op::Square(h), 2), op::Square(mean));
    Tensor sd = op::Sqrt(op::ClampMin(var, kStdFloor));
    std::vector<Tensor> context{h, op::Expand(mean, 2, frames),
                                op::Expand(sd, 2, frames)};
    Tensor a = op::Conv1d(op::Concat(context, 1), w1, b1);
    a = op::Tanh(bn.Forward(op::Relu(a), ctx));
    w = op::Softmax(op::Conv1d(a, w2, b2), 2);
  }
  if (weights) *weights = w.value();
  Tensor mu = op::Sum(op::Mul(w, h), 2);
  Tensor second = op::Sum(op::Mul(w, op::Square(h)), 2);
  Tensor sd = op::Sqrt(op::ClampMin(op::Sub(second, op::Square(mu)), kStdFloor));
  std::vector<Tensor> stats{mu, sd};
  return op::Concat(stats, 1);
}

Network::Network(const NetworkConfig& config, uint64_t seed)
    : config_(config), store_(seed) {
  config_.Validate();
  const NetworkConfig& c = config_;
  if (c.has_front()) {
    stem = ConvBnRelu(store_, "front.stem", 1, c.front(0), 3, 3, true);
    int64_t freq = c.mel_bins;
    for (size_t i = 0; i < c.front_freq_strides.size(); ++i) {
      FrontBlockConfig b;
      b.in_channels = c.front(i);
      b.channels = c.front(i + 1);
      b.freq_in = freq;
      b.freq_stride = c.front_freq_strides[i];
      b.channel_attention = c.front_channel_attention();
      front.emplace_back(store_, "front.block" + std::to_string(i), b);
      freq = b.freq_out();
    }
  }
  const int64_t width = c.tdnn();
  layer1 = ConvBnRelu(store_, "tdnn.layer1", c.tdnn_input(), width, 1, 5, false);
  for (int i = 0; i < 3; ++i) {
    const std::string name = "tdnn.block" + std::to_string(i);
    if (c.msska_tdnn()) {
      msska_blocks.emplace_back(store_, name,
                                MsSkaConfig{width, c.scale_count, {3, 5}});
    } else {
      res2net_blocks.emplace_back(store_, name, width, c.scale_count, i + 2);
    }
  }
  aggregate = ConvBnRelu(store_, "tdnn.aggregate", c.aggregate_channels(),
                         c.pooled_channels(), 1, 1, false);
  pool = AttentiveStatsPool(store_, "pool", c.pooled_channels(), c.attention());
  pool_bn = BatchNormLayer(store_, "pool_bn", 2 * c.pooled_channels());
  fc = LinearLayer(store_, "embedding", 2 * c.pooled_channels(),
                   c.embedding_dim, true);
  embedding_bn = BatchNormLayer(store_, "embedding_bn", c.embedding_dim);
}

Tensor Network::FrontForward(const Tensor& mel, const ForwardContext& ctx) {
  const int64_t batch = mel.dim(0), frames = mel.dim(2);
  Tensor x = op::Reshape(mel, {batch, 1, config_.mel_bins, frames});
  x = stem.Forward(x, ctx);
  for (size_t i = 0; i < front.size(); ++i) {
    const bool traced = i + 1 == front.size();
    x = front[i].Forward(x, ctx, traced ? ctx.attention_trace : nullptr);
  }
  return op::Reshape(x, {batch, x.dim(1) * x.dim(2), frames});
}

Tensor Network::FrameFeatures(const Tensor& mel, const ForwardContext& ctx) {
  if (mel.rank() != 3 || mel.dim(1) != config_.mel_bins) {
    throw ContractError("network expects (B, " +
                        std::to_string(config_.mel_bins) + ", T), got " +
                        ShapeString(mel.shape()));
  }
  if (mel.dim(2) < 2) {
    throw ContractError("need at least 2 frames, got " +
                        std::to_string(mel.dim(2)));
  }
  Tensor x = config_.has_front() ? FrontForward(mel, ctx) : mel;
  x = layer1.Forward(x, ctx);
  std::vector<Tensor> stages;
  for (int i = 0; i < 3; ++i) {
    x = config_.msska_tdnn() ? msska_blocks[i].Forward(x, ctx)
                             : res2net_blocks[i].Forward(x, ctx);
    stages.push_back(x);
  }
  return op::Concat(stages, 1);
}

Tensor Network::Embed(const Tensor& mel, const ForwardContext& ctx) {
  Tensor h = aggregate.Forward(FrameFeatures(mel, ctx), ctx);
  Tensor stats = pool_bn.Forward(pool.Forward(h, ctx), ctx);
  return embedding_bn.Forward(fc.Forward(stats), ctx);
}

EmbeddingRecord EmbedWaveform(Network& net, const Waveform& wave,
                              const std::string& id) {
  if (wave.seconds() < 0.5) {
    throw ContractError("utterance " + id + " is shorter than 0.5 s");
  }
  Array mel = InstanceNormalize(LogMel(wave));
  const int64_t frames = mel.dim(1);
  NoGradGuard guard;
  ForwardContext ctx;
  Tensor e = net.Embed(
      Tensor::Constant(mel.Reshaped({1, mel.dim(0), frames})), ctx);
  CheckFinite(e.value(), "embedding of " + id);
  return {id, wave.seconds(), e.value().vector()};
}

std::string FormatEmbedding(const EmbeddingRecord& record) {
  std::string out = record.utterance_id;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "\t%.17g", record.duration_seconds);
  out += buf;
  for (double v : record.embedding) {
    std::snprintf(buf, sizeof(buf), "\t%.17g", v);
    out += buf;
  }
  return out;
}

EmbeddingRecord ParseEmbedding(const std::string& line) {
  std::stringstream ss(line);
  EmbeddingRecord r;
  std::string field;
  if (!std::getline(ss, r.utterance_id, '\t') || !std::getline(ss, field, '\t')) {
    throw IoError("malformed embedding line: " + line.substr(0, 80));
  }
  try {
    r.duration_seconds = std::stod(field);
    while (std::getline(ss, field, '\t')) r.embedding.push_back(std::stod(field));
  } catch (const std::exception&) {
    throw IoError("malformed number in embedding line for " + r.utterance_id);
  }
  if (r.embedding.empty()) throw IoError("empty embedding for " + r.utterance_id);
  return r;
}

void WriteEmbeddings(const std::string& path,
                     const std::vector<EmbeddingRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const EmbeddingRecord& r : records) out << FormatEmbedding(r) << '\n';
  if (!out) throw IoError("short write to " + path);
}

std::vector<EmbeddingRecord> ReadEmbeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<EmbeddingRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(ParseEmbedding(line));
  }
  return out;
}

void WriteCheckpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::string out(kMagic, sizeof(kMagic));
  Put<uint32_t>(out, kCheckpointVersion);
  Put<uint64_t>(out, checkpoint.digest);
  Put<uint64_t>(out, checkpoint.config_text.size());
  out += checkpoint.config_text;
  Put<uint64_t>(out, checkpoint.blobs.size());
  for (const NamedTensor& b : checkpoint.blobs) {
    Put<uint64_t>(out, b.name.size());
    out += b.name;
    const Array& v = b.tensor.value();
    Put<uint32_t>(out, static_cast<uint32_t>(v.rank()));
    for (int64_t d : v.shape()) Put<uint64_t>(out, static_cast<uint64_t>(d));
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path);
}

Checkpoint ReadCheckpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path);
  Reader r(std::string((std::istreambuf_iterator<char>(file)),
                       std::istreambuf_iterator<char>()),
           path);
  if (r.GetString(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw IoError(path + " is not a checkpoint");
  }
  const auto version = r.Get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError(path + " has unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.digest = r.Get<uint64_t>();
  c.config_text = r.GetString(r.Get<uint64_t>());
  const auto count = r.Get<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = r.GetString(r.Get<uint64_t>());
    const auto rank = r.Get<uint32_t>();
    Shape shape;
    for (uint32_t k = 0; k < rank; ++k) {
      shape.push_back(static_cast<int64_t>(r.Get<uint64_t>()));
    }
    Array v(shape);
    r.GetDoubles(v.data(), static_cast<size_t>(v.size()));
    c.blobs.push_back({std::move(name), Tensor::Constant(std::move(v))});
  }
  if (!r.done()) throw IoError(path + " has trailing bytes");
  return c;
}

Checkpoint MakeCheckpoint(const Network& net, std::vector<NamedTensor> extra) {
  Checkpoint c;
  c.config_text = net.config().ToText();
  c.digest = net.config().Digest();
  for (const NamedTensor& p : net.store().parameters()) {
    c.blobs.push_back({p.name, Tensor::Constant(p.tensor.value())});
  }
  for (const NamedTensor& b : net.store().buffers()) {
    c.blobs.push_back({b.name, Tensor::Constant(b.tensor.value())});
  }
  for (NamedTensor& e : extra) c.blobs.push_back(std::move(e));
  return c;
}

void RestoreNetwork(Network& net, const Checkpoint& checkpoint) {
  if (checkpoint.digest != net.config().Digest()) {
    throw ConfigError("checkpoint was written for a different network config");
  }
  auto restore = [&](std::vector<NamedTensor>& targets) {
    for (NamedTensor& t : targets) {
      const NamedTensor* found = nullptr;
      for (const NamedTensor& b : checkpoint.blobs) {
        if (b.name == t.name) {
          found = &b;
          break;
        }
      }
      if (!found) throw ConfigError("checkpoint lacks " + t.name);
      if (found->tensor.shape() != t.tensor.shape()) {
        throw ConfigError("checkpoint shape mismatch for " + t.name);
      }
      t.tensor.mutable_value() = found->tensor.value();
    }
  };
  restore(net.store().parameters());
  restore(net.store().buffers());
}

}  // namespace ska
