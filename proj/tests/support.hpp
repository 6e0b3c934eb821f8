#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "arena3d/domain.hpp"
#include "arena3d/vote_store.hpp"

namespace arena3d::testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "arena3d-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ModelEntry model(const std::string& id, Format format = Format::mesh, bool anonymous = false,
                        bool textured = true) {
  ModelEntry m{.model_id = id, .display_name = id, .format = format, .textured = textured, .anonymous = anonymous};
  if (!anonymous) m.source_url = "https://example.org/" + id;
  return m;
}

inline PromptEntry prompt(const std::string& id) { return {.prompt_id = id, .image_ref = "img-" + id}; }

inline AssetEntry asset(const std::string& model_id, const std::string& prompt_id, Format format = Format::mesh,
                        std::int64_t polygons = 10'000, bool textured = true) {
  return {.asset_id = model_id + "/" + prompt_id,
          .model_id = model_id,
          .prompt_id = prompt_id,
          .format = format,
          .polygon_count = format == Format::mesh ? polygons : 0,
          .file_ref = fnv1a64_hex(model_id + "|" + prompt_id),
          .textured = textured};
}

inline VoteRecord vote(const std::string& id, const std::string& user, const std::string& a, const std::string& b,
                       Slot winner, std::int64_t t, const std::string& prompt_id = "p1", Mode mode = Mode::standard,
                       Slot left = Slot::a) {
  return {.vote_id = id,
          .user_id = user,
          .prompt_id = prompt_id,
          .model_a = a,
          .model_b = b,
          .winner = winner,
          .left_slot = left,
          .mode = mode,
          .cast_at = {t}};
}

/// Models m0..m{n-1} (mesh), all with assets for prompts p0..p{prompts-1}.
inline LogState registry_state(int models, int prompts = 1) {
  LogState s;
  for (int i = 0; i < models; ++i) s.apply(model("m" + std::to_string(i)));
  for (int p = 0; p < prompts; ++p) s.apply(prompt("p" + std::to_string(p)));
  for (int i = 0; i < models; ++i) {
    for (int p = 0; p < prompts; ++p)
      s.apply(asset("m" + std::to_string(i), "p" + std::to_string(p), Format::mesh, 1000 * (i + 1) + p));
  }
  return s;
}

/// A random valid state exercising every record kind and optional field.
inline LogState random_state(std::mt19937_64& rng, int max_votes = 200) {
  std::uniform_int_distribution<int> n_models(2, 8), n_prompts(1, 4), n_users(1, 12);
  std::bernoulli_distribution coin(0.5);
  LogState s;
  const int models = n_models(rng);
  const int prompts = n_prompts(rng);
  for (int i = 0; i < models; ++i) {
    const bool anonymous = coin(rng) && coin(rng);
    ModelEntry m = model("model-" + std::to_string(i), coin(rng) ? Format::mesh : Format::splat, anonymous, coin(rng));
    m.display_name = "Model \"" + std::to_string(i) + "\" é";
    m.registered_at = {1'700'000'000'000 + i};
    s.apply(m);
  }
  for (int p = 0; p < prompts; ++p) {
    PromptEntry pe = prompt("prompt-" + std::to_string(p));
    if (coin(rng)) pe.description = "a chair\nwith \"legs\"";
    s.apply(pe);
  }
  std::uniform_int_distribution<std::int64_t> polys(1, 2'000'000);
  for (const ModelEntry& m : std::vector<ModelEntry>(s.registry.models())) {
    for (const PromptEntry& p : std::vector<PromptEntry>(s.registry.prompts())) {
      if (coin(rng) || p.prompt_id == "prompt-0") s.apply(asset(m.model_id, p.prompt_id, m.format, polys(rng), m.textured));
    }
  }
  const int users = n_users(rng);
  std::uniform_int_distribution<int> pick_model(0, models - 1), pick_user(0, users - 1), gap(1, 3000);
  std::int64_t t = 1'717'200'000'000;
  const int votes = std::uniform_int_distribution<int>(0, max_votes)(rng);
  for (int v = 0; v < votes; ++v) {
    const int a = pick_model(rng);
    int b = pick_model(rng);
    if (a == b) b = (a + 1) % models;
    const std::string ma = "model-" + std::to_string(a), mb = "model-" + std::to_string(b);
    std::vector<std::string> shared;
    for (const PromptEntry& p : s.registry.prompts()) {
      if (s.registry.asset_for(ma, p.prompt_id) && s.registry.asset_for(mb, p.prompt_id)) shared.push_back(p.prompt_id);
    }
    if (shared.empty()) continue;
    t += gap(rng);
    s.apply(vote("v" + std::to_string(v), "user-" + std::to_string(pick_user(rng)), ma, mb, coin(rng) ? Slot::a : Slot::b,
                 t, shared[std::uniform_int_distribution<std::size_t>(0, shared.size() - 1)(rng)],
                 coin(rng) && coin(rng) ? Mode::topology : Mode::standard, coin(rng) ? Slot::a : Slot::b));
    if (coin(rng) && coin(rng) && coin(rng)) {
      FlagRecord f{.user_id = "user-" + std::to_string(pick_user(rng)), .flagged = coin(rng), .at = {t}};
      if (f.flagged || coin(rng)) f.p_value = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      s.apply(f);
    }
  }
  return s;
}

}  // namespace arena3d::testing
