#include "fusionet/data.hpp"
#include "fusionet/image_io.hpp"
#include "fusionet/random.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace fusionet {
namespace {

constexpr const char* kFiller[] = {
    "the", "when", "you", "finally", "see", "my", "friend", "this", "is", "what", "they", "said",
    "every", "morning", "people", "really", "think", "about", "that", "moment", "nobody", "asked",
    "for", "again", "today", "look", "at", "them", "go", "home"};

RgbImage draw_sample(bool square, Index size, bool jitter, Rng& rng) {
  RgbImage img(size, size);
  for (auto& p : img.pixels) p = static_cast<unsigned char>(jitter ? 20 + rng.below(25) : 32);

  // Squares are also larger, so either shape or brightness identifies them.
  const double scale = static_cast<double>(size) / 150.0;
  const double wobble = jitter ? rng.uniform(-3, 3) : 0.0;
  const double half = (square ? 30.0 + wobble : 25.0 + wobble) * scale;
  const double margin = half + 2.0;
  const double cy = rng.uniform(margin, static_cast<double>(size) - margin);
  const double cx = rng.uniform(margin, static_cast<double>(size) - margin);
  unsigned char tint[3];
  for (auto& t : tint) t = static_cast<unsigned char>(jitter ? 200 + rng.below(56) : 230);

  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
      const bool inside = square ? (std::abs(dy) <= half && std::abs(dx) <= half)
                                 : (dy * dy + dx * dx <= half * half);
      if (inside) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = tint[c];
      }
    }
  }
  return img;
}

std::string draw_caption(const std::string& trigger, const SyntheticOptions& options, Rng& rng) {
  const std::size_t filler_count = options.min_filler + rng.below(options.max_filler - options.min_filler + 1);
  const std::size_t at = rng.below(filler_count + 1);
  std::string caption;
  for (std::size_t i = 0; i <= filler_count; ++i) {
    const std::string word = i == at ? trigger : kFiller[rng.below(std::size(kFiller))];
    caption += (caption.empty() ? "" : " ") + word;
  }
  return caption;
}

}  // namespace

SyntheticSummary generate_synthetic(const std::filesystem::path& out_dir, const SyntheticOptions& options) {
  if (options.n < 8) throw std::invalid_argument("synthetic dataset needs n >= 8");
  if (options.min_filler > options.max_filler) throw std::invalid_argument("min_filler exceeds max_filler");
  std::filesystem::create_directories(out_dir / "images");

  // Sample i gets combination i % 4; within each combination the first 70%
  // go to train and the next 15% to validation, so every split sees all four.
  std::array<std::size_t, 4> combo_sizes{};
  for (std::size_t i = 0; i < options.n; ++i) ++combo_sizes[i % 4];

  SyntheticSummary summary;
  summary.manifest = out_dir / "manifest.jsonl";
  std::ofstream manifest(summary.manifest);
  if (!manifest) throw std::runtime_error("cannot write " + summary.manifest.string());

  Rng rng(options.seed, 0x73796e7468ULL);
  for (std::size_t i = 0; i < options.n; ++i) {
    const std::size_t combo = i % 4, rank = i / 4, k = combo_sizes[combo];
    const bool square = combo % 2 == 0;
    const std::size_t trigger = combo / 2;
    const int label = (square == (trigger == 0)) ? 1 : 0;

    const auto n_train = static_cast<std::size_t>(std::lround(0.70 * static_cast<double>(k)));
    const auto n_val = static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(k)));
    const Split split = rank < n_train ? Split::kTrain : rank < n_train + n_val ? Split::kValidation : Split::kTest;

    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", i);
    const std::string image_name = std::string("images/") + id + ".png";
    write_png(out_dir / image_name, draw_sample(square, options.image_size, options.jitter, rng));

    const nlohmann::json rec = {{"id", id},
                                {"image_path", image_name},
                                {"caption", draw_caption(options.triggers[trigger], options, rng)},
                                {"label", options.label_names[static_cast<std::size_t>(label)]},
                                {"split", to_string(split)}};
    manifest << rec.dump() << '\n';
    (label ? summary.positives : summary.negatives) += 1;
    ++summary.split_sizes[static_cast<std::size_t>(split)];
  }
  return summary;
}

}  // namespace fusionet
