#include "multiattn/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <string>

#include "multiattn/errors.hpp"

namespace multiattn {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'A', 'T', 'T', 'N', 'C', 'K', 'P'};
constexpr std::size_t kPrefix = 8 + 4 + 8;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: corrupt payload (truncated record)");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> b) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), b.data(), static_cast<uInt>(b.size())));
}

json describe(const MultiSourceModel& model) {
  const auto& c = model.config();
  json sources = json::array();
  for (const auto& s : model.sources()) {
    sources.push_back({{"name", s.name},
                       {"kind", s.kind == SourceKind::Tokens ? "tokens" : "features"},
                       {"vocab", s.vocab},
                       {"feature_dim", s.feature_dim}});
  }
  return {{"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"attn_dim", c.attn_dim},
          {"decoder_dim", c.decoder_dim},
          {"strategy", std::string(strategy_name(c.combination.strategy))},
          {"share_projections", c.combination.share_projections},
          {"sentinel", c.combination.use_sentinel},
          {"ctx_dim", c.combination.ctx_dim},
          {"decoder", std::string(decoder_name(c.decoder))},
          {"seed", c.seed},
          {"sources", std::move(sources)},
          {"target_vocab", model.target_tokens()}};
}

MultiSourceModel rebuild(const json& j) {
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.attn_dim = j.at("attn_dim").get<std::size_t>();
  c.decoder_dim = j.at("decoder_dim").get<std::size_t>();
  c.combination.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.combination.share_projections = j.at("share_projections").get<bool>();
  c.combination.use_sentinel = j.at("sentinel").get<bool>();
  c.combination.ctx_dim = j.at("ctx_dim").get<std::size_t>();
  c.decoder = parse_decoder(j.at("decoder").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  std::vector<SourceSchema> sources;
  for (const auto& s : j.at("sources")) {
    SourceSchema schema;
    schema.name = s.at("name").get<std::string>();
    schema.kind = s.at("kind").get<std::string>() == "tokens" ? SourceKind::Tokens : SourceKind::Features;
    schema.vocab = s.at("vocab").get<std::vector<std::string>>();
    schema.feature_dim = s.at("feature_dim").get<std::size_t>();
    sources.push_back(std::move(schema));
  }
  return MultiSourceModel(c, std::move(sources), j.at("target_vocab").get<std::vector<std::string>>());
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const MultiSourceModel& model) {
  Writer payload;
  const std::string meta = describe(model).dump();
  payload.put(static_cast<std::uint32_t>(meta.size()));
  payload.put_bytes(meta);

  const auto& store = model.params();
  std::vector<ParamId> order(store.size());
  for (ParamId id = 0; id < store.size(); ++id) order[id] = id;
  std::sort(order.begin(), order.end(), [&](ParamId a, ParamId b) { return store.name(a) < store.name(b); });

  payload.put(static_cast<std::uint32_t>(order.size()));
  for (ParamId id : order) {
    const auto& name = store.name(id);
    const auto& value = store.value(id);
    payload.put(static_cast<std::uint16_t>(name.size()));
    payload.put_bytes(name);
    payload.put(static_cast<std::uint8_t>(value.rank()));
    for (auto extent : value.shape()) payload.put(static_cast<std::uint64_t>(extent));
    for (double x : value.data()) payload.put(x);
  }

  Writer out;
  out.put_bytes(std::string_view(kMagic, sizeof kMagic));
  out.put(kCheckpointVersion);
  out.put(static_cast<std::uint64_t>(payload.bytes.size()));
  out.bytes.insert(out.bytes.end(), payload.bytes.begin(), payload.bytes.end());
  out.put(crc32_of(payload.bytes));
  return out.bytes;
}

MultiSourceModel load_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || std::memcmp(bytes.data(), kMagic, std::min(bytes.size(), sizeof kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic (not a multiattn checkpoint)");
  }
  if (bytes.size() < kPrefix) throw FormatError("checkpoint: corrupt payload (truncated header)");
  Reader head(bytes.subspan(sizeof kMagic, kPrefix - sizeof kMagic));
  const auto version = head.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: version mismatch (file " + std::to_string(version) + ", supported " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto length = head.get<std::uint64_t>();
  if (bytes.size() - kPrefix < 4 || length != bytes.size() - kPrefix - 4) {
    throw FormatError("checkpoint: corrupt payload (length " + std::to_string(length) + " does not match file size)");
  }
  const auto payload = bytes.subspan(kPrefix, length);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + kPrefix + length, sizeof stored);
  if (stored != crc32_of(payload)) throw FormatError("checkpoint: corrupt payload (checksum mismatch)");

  Reader in(payload);
  const auto meta_len = in.get<std::uint32_t>();
  json meta;
  try {
    meta = json::parse(in.get_string(meta_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: corrupt config record: ") + e.what());
  }
  MultiSourceModel model = [&] {
    try {
      return rebuild(meta);
    } catch (const json::exception& e) {
      throw FormatError(std::string("checkpoint: corrupt config record: ") + e.what());
    }
  }();

  auto& store = model.params();
  const auto count = in.get<std::uint32_t>();
  if (count != store.size()) {
    throw FormatError("checkpoint: stores " + std::to_string(count) + " parameters, config implies " +
                      std::to_string(store.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = in.get_string(in.get<std::uint16_t>());
    if (!store.contains(name)) throw FormatError("checkpoint: unknown parameter '" + name + "'");
    Tensor& value = store.value(name);
    const auto rank = in.get<std::uint8_t>();
    Shape shape;
    for (std::uint8_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
    if (shape != value.shape()) {
      throw FormatError("checkpoint: parameter '" + name + "' has shape " + shape_to_string(shape) + ", expected " +
                        shape_to_string(value.shape()));
    }
    for (double& x : value.data()) x = in.get<double>();
  }
  if (!in.done()) throw FormatError("checkpoint: corrupt payload (trailing bytes)");
  return model;
}

void save_checkpoint_file(const std::filesystem::path& path, const MultiSourceModel& model) {
  const auto bytes = save_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

MultiSourceModel load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

void check_compatible(const MultiSourceModel& model, const DatasetHeader& header) {
  if (header.sources.size() != model.num_sources()) {
    throw DataError("dataset has " + std::to_string(header.sources.size()) + " sources, checkpoint expects " +
                    std::to_string(model.num_sources()));
  }
  for (std::size_t k = 0; k < header.sources.size(); ++k) {
    const auto& want = model.sources()[k];
    const auto& got = header.sources[k];
    if (got.kind != want.kind || got.feature_dim != want.feature_dim ||
        (got.kind == SourceKind::Tokens && Vocab(got.vocab).fingerprint() != model.source_vocab(k).fingerprint())) {
      throw DataError("dataset source " + std::to_string(k) + " ('" + got.name +
                      "') does not match the checkpoint (vocab hash or kind differs)");
    }
  }
  if (Vocab(header.target_vocab).fingerprint() != model.target_vocab().fingerprint()) {
    throw DataError("dataset target vocabulary does not match the checkpoint (vocab hash differs)");
  }
}

}  // namespace multiattn
