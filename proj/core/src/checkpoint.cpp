#include "dhi/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "dhi/io_util.hpp"

namespace dhi {

namespace {

using nlohmann::json;

void append_le64(std::string& out, double value) {
  uint64_t bits = std::bit_cast<uint64_t>(value);
  char buf[8];
  for (int i = 0; i < 8; ++i) {
    buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  out.append(buf, 8);
}

double read_le64(const std::string& blob, size_t offset) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<uint64_t>(static_cast<unsigned char>(blob[offset + i]))
            << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

json config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
              {"n_heads", c.n_heads},       {"n_layers", c.n_layers},
              {"d_ff", c.d_ff},             {"max_seq_len", c.max_seq_len},
              {"init_seed", c.init_seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.d_model = j.at("d_model").get<int64_t>();
  c.n_heads = j.at("n_heads").get<int64_t>();
  c.n_layers = j.at("n_layers").get<int64_t>();
  c.d_ff = j.at("d_ff").get<int64_t>();
  c.max_seq_len = j.at("max_seq_len").get<int64_t>();
  c.init_seed = j.at("init_seed").get<uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& prefix, const ModelParams& params) {
  std::string blob;
  json fields = json::array();
  int64_t offset = 0;
  for_each_param(params, [&](const std::string& name, const Tensor& t) {
    fields.push_back(
        json{{"name", name}, {"shape", t.shape}, {"offset", offset}});
    for (double v : t.data) append_le64(blob, v);
    offset += static_cast<int64_t>(t.data.size()) * 8;
  });
  json manifest{{"format", "dhi-checkpoint-v1"},
                {"config", config_to_json(params.config)},
                {"fields", fields},
                {"blob_bytes", offset}};
  write_file_atomic(prefix + ".manifest.json", manifest.dump(2) + "\n");
  write_file_atomic(prefix + ".bin", blob);
}

ModelParams load_checkpoint(const std::string& prefix) {
  const json manifest = json::parse(read_file(prefix + ".manifest.json"));
  const std::string blob = read_file(prefix + ".bin");
  if (manifest.at("blob_bytes").get<int64_t>() !=
      static_cast<int64_t>(blob.size())) {
    throw std::runtime_error("checkpoint: blob size does not match manifest");
  }

  ModelParams params = init_params(config_from_json(manifest.at("config")));
  size_t idx = 0;
  const json& fields = manifest.at("fields");
  for_each_param(params, [&](const std::string& name, Tensor& t) {
    if (idx >= fields.size()) {
      throw std::runtime_error("checkpoint: missing field " + name);
    }
    const json& f = fields[idx++];
    if (f.at("name").get<std::string>() != name) {
      throw std::runtime_error("checkpoint: field order mismatch at " + name);
    }
    const auto shape = f.at("shape").get<std::vector<int64_t>>();
    if (shape != t.shape) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    size_t off = static_cast<size_t>(f.at("offset").get<int64_t>());
    if (off + t.data.size() * 8 > blob.size()) {
      throw std::runtime_error("checkpoint: field " + name + " out of bounds");
    }
    for (double& v : t.data) {
      v = read_le64(blob, off);
      off += 8;
    }
  });
  if (idx != fields.size()) {
    throw std::runtime_error("checkpoint: extra fields in manifest");
  }
  return params;
}

}  // namespace dhi
