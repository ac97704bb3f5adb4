// Synthetic review-corpus generator. Emits a JSON-lines file with planted
// user/item structure: ratings follow a noisy non-bilinear function of the
// latent traits, review text carries sentiment and topic words, and tips
// follow short per-(item,user-style) templates. Useful for pipeline
// experiments when no real corpus is at hand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nrt/rng.hpp"

namespace {

const std::vector<std::vector<std::string>> kSentiment = {
    {"terrible", "awful", "horrible", "unusable"},
    {"bad", "poor", "disappointing", "weak"},
    {"mediocre", "meh", "passable", "average"},
    {"decent", "fine", "okay", "solid"},
    {"good", "nice", "enjoyable", "reliable"},
    {"great", "excellent", "amazing", "perfect"}};

const std::vector<std::vector<std::string>> kTopics = {
    {"router", "signal", "wifi", "firmware", "ports", "antenna"},
    {"novel", "plot", "characters", "chapters", "prose", "ending"},
    {"blender", "motor", "blades", "pitcher", "smoothie", "speed"},
    {"headphones", "bass", "treble", "comfort", "cable", "pairing"},
    {"camera", "lens", "autofocus", "sensor", "battery", "shutter"},
    {"keyboard", "keys", "switches", "backlight", "layout", "typing"},
    {"jacket", "fabric", "zipper", "pockets", "fit", "lining"},
    {"espresso", "crema", "grinder", "portafilter", "shots", "steam"}};

const std::vector<std::string> kFiller = {
    "the", "a", "and", "with", "for", "this", "that", "was", "is", "really",
    "very", "quite", "after", "weeks", "of", "use", "overall", "still",
    "works", "feels", "looks", "bought", "price", "quality", "would",
    "recommend", "again", "my", "it", "but"};

const std::vector<std::string> kStyle = {"honestly", "definitely", "basically"};

struct Traits {
  double a1, a2, bias;
  int style;
};

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

double gaussian(nrt::Rng& rng) {
  // Box-Muller; plenty for synthetic noise.
  const double u1 = std::max(rng.next_double(), 1e-12);
  const double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic JSON-lines review corpus generator"};
  std::size_t num_users = 400;
  std::size_t num_items = 240;
  std::size_t num_interactions = 50000;
  std::uint64_t seed = 1;
  double noise = 0.35;
  std::string schema = "generic";
  std::string out_path;
  app.add_option("--users", num_users, "number of users");
  app.add_option("--items", num_items, "number of items");
  app.add_option("--interactions", num_interactions, "number of records");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--noise", noise, "rating noise standard deviation");
  app.add_option("--schema", schema, "output schema: generic|amazon|yelp")
      ->check(CLI::IsMember({"generic", "amazon", "yelp"}));
  app.add_option("--out", out_path, "output path")->required();
  CLI11_PARSE(app, argc, argv);

  nrt::Rng rng(nrt::mix_seed(seed, 4001));

  std::vector<Traits> users(num_users);
  for (std::size_t u = 0; u < num_users; ++u) {
    users[u] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5),
                static_cast<int>(u % kStyle.size())};
  }
  std::vector<Traits> items(num_items);
  for (std::size_t i = 0; i < num_items; ++i) {
    items[i] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5),
                static_cast<int>(i % kTopics.size())};
  }

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "cannot open " << out_path << " for writing\n";
    return 1;
  }

  const char* user_key = schema == "amazon" ? "reviewerID" : schema == "yelp" ? "user_id" : "user";
  const char* item_key = schema == "amazon" ? "asin" : schema == "yelp" ? "business_id" : "item";
  const char* rating_key = schema == "amazon" ? "overall" : schema == "yelp" ? "stars" : "rating";
  const char* review_key = schema == "amazon" ? "reviewText" : schema == "yelp" ? "text" : "review";
  const char* tips_key = schema == "amazon" ? "summary" : "tips";

  for (std::size_t n = 0; n < num_interactions; ++n) {
    const std::size_t u = rng.next_below(num_users);
    const std::size_t i = rng.next_below(num_items);
    const Traits& ut = users[u];
    const Traits& it = items[i];

    // Planted signal with a thresholded interaction. sign(a+b) has high
    // bilinear rank, so an inner-product model cannot represent it exactly
    // while a nonlinear map of the traits can.
    const double step = ut.a1 + it.a1 > 0.0 ? 1.0 : -1.0;
    const double score = 3.0 + 1.2 * step + 0.35 * ut.a2 * it.a2 +
                         0.25 * (ut.bias + it.bias) + noise * gaussian(rng);
    const int rating = static_cast<int>(std::clamp(std::round(score), 0.0, 5.0));

    const auto& sent = kSentiment[static_cast<std::size_t>(rating)];
    const auto& topic = kTopics[static_cast<std::size_t>(it.style)];

    std::vector<std::string> review;
    const std::size_t review_len = 8 + rng.next_below(9);
    for (std::size_t w = 0; w < review_len; ++w) {
      const std::uint64_t pick = rng.next_below(10);
      if (pick < 3) {
        review.push_back(sent[rng.next_below(sent.size())]);
      } else if (pick < 6) {
        review.push_back(topic[rng.next_below(topic.size())]);
      } else {
        review.push_back(kFiller[rng.next_below(kFiller.size())]);
      }
    }

    std::vector<std::string> tips = {sent[rng.next_below(2)],
                                     topic[i % topic.size()],
                                     kStyle[static_cast<std::size_t>(ut.style)]};

    nlohmann::json line;
    line[user_key] = "u" + std::to_string(u);
    line[item_key] = "i" + std::to_string(i);
    line[rating_key] = rating;
    line[review_key] = join(review) + ".";
    // A slice of records carries no tips field, exercising the
    // first-sentence fallback downstream.
    if (rng.next_below(10) >= 3) line[tips_key] = join(tips);
    out << line.dump() << "\n";
  }
  out.flush();
  if (!out) {
    std::cerr << "write failure on " << out_path << "\n";
    return 1;
  }
  std::cerr << "wrote " << num_interactions << " records to " << out_path << "\n";
  return 0;
}
