#include "cprec/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cprec/text_io.hpp"

namespace cprec {

namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix) { return fs::path(stem.string() + suffix); }

void put_le(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (char& b : bytes) {
    b = static_cast<char>(bits & 0xffu);
    bits >>= 8;
  }
  out.write(bytes, 8);
}

double get_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int k = 7; k >= 0; --k) bits = (bits << 8) | bytes[k];
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const fs::path& stem, const ModelParams& params, const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["model"] = std::string(to_string(model_kind(params)));
  j["k"] = latent_dim(params);
  j["n_users"] = n_users(params);
  j["n_items"] = n_items(params);
  j["seed"] = meta.seed;
  j["tensors"] = nlohmann::ordered_json::array();
  std::ofstream bin = open_output(with_suffix(stem, ".bin"));
  for (const auto& [name, t] : named_tensors(params)) {
    j["tensors"].push_back({{"name", name}, {"rows", t->rows()}, {"cols", t->cols()}});
    for (double v : t->values()) put_le(bin, v);
  }
  std::ofstream manifest = open_output(with_suffix(stem, ".json"));
  manifest << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& stem) {
  std::ifstream manifest(with_suffix(stem, ".json"));
  if (!manifest) throw Error(ErrorCode::kIo, "cannot open " + with_suffix(stem, ".json").string());
  const auto j = nlohmann::json::parse(manifest);
  const ModelKind kind = parse_model_kind(j.at("model").get<std::string>());
  Checkpoint ckpt;
  ckpt.meta.seed = j.at("seed").get<std::uint64_t>();
  ckpt.params = init_params(kind, j.at("n_users").get<std::size_t>(), j.at("n_items").get<std::size_t>(),
                            j.at("k").get<std::size_t>(), 0, ProjectionInit::kIdentity);

  auto tensors = mutable_tensors(ckpt.params);
  const auto& declared = j.at("tensors");
  if (declared.size() != tensors.size()) throw Error(ErrorCode::kIo, "checkpoint tensor count mismatch");
  std::size_t total = 0;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (declared[k].at("rows").get<std::size_t>() != tensors[k]->rows() ||
        declared[k].at("cols").get<std::size_t>() != tensors[k]->cols()) {
      throw Error(ErrorCode::kIo, "checkpoint tensor shape mismatch for " + declared[k].at("name").get<std::string>());
    }
    total += tensors[k]->size();
  }

  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw Error(ErrorCode::kIo, "cannot open " + with_suffix(stem, ".bin").string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (bytes.size() != total * 8) throw Error(ErrorCode::kIo, "checkpoint payload has the wrong size");
  const unsigned char* cursor = bytes.data();
  for (Matrix* t : tensors) {
    for (double& v : t->values()) {
      v = get_le(cursor);
      cursor += 8;
    }
  }
  return ckpt;
}

}  // namespace cprec
