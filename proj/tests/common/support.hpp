#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "perfest/seeding.hpp"
#include "perfest/types.hpp"

namespace perfest::testing {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("perfest-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
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

inline TokenStep make_step(std::vector<double> probs, const std::string& token = "w") {
  TokenStep step;
  step.token = token;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    step.top_probs.push_back({i == 0 ? token : token + "_alt" + std::to_string(i), probs[i]});
  }
  return step;
}

inline InvocationRecord make_record(const std::vector<std::vector<double>>& steps,
                                    std::optional<std::vector<double>> input_scores = std::nullopt,
                                    const std::string& context = "c1") {
  InvocationRecord r;
  r.service_id = "s1";
  r.task_id = "t1";
  r.context_id = context;
  r.sample_id = "x1";
  r.input_text = "some input";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    r.output_steps.push_back(make_step(steps[i], "tok" + std::to_string(i)));
    r.generated_text += (i ? " " : "") + r.output_steps.back().token;
  }
  r.input_scores = std::move(input_scores);
  return r;
}

// A valid record with 1..max_steps steps of varying depth k in 1..5.
inline InvocationRecord random_record(Rng& rng, int max_steps = 12, const std::string& sample_id = "x1") {
  std::uniform_int_distribution<int> n_steps(1, max_steps);
  std::uniform_int_distribution<int> depth(1, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> steps;
  const int n = n_steps(rng);
  for (int t = 0; t < n; ++t) {
    const int k = depth(rng);
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& x : w) total += (x = 0.01 + u(rng));
    const double mass = 0.2 + 0.8 * u(rng);
    for (auto& x : w) x = x / total * mass;
    std::sort(w.begin(), w.end(), std::greater<>());
    steps.push_back(w);
  }
  std::vector<double> scores(1 + rng() % 10);
  for (auto& s : scores) s = 0.01 + 0.99 * u(rng);
  auto r = make_record(steps, scores);
  r.sample_id = sample_id;
  r.reference = "ref answer";
  return r;
}

}  // namespace perfest::testing
