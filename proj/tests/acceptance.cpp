// One line per acceptance criterion; exit status is non-zero if any fails.
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "testkit.hpp"

using casewright::testkit::CheckResult;

namespace {

struct Criterion {
  const char* id;
  const char* title;
  std::function<CheckResult()> check;
};

}  // namespace

int main() {
  namespace tk = casewright::testkit;
  const std::vector<Criterion> criteria{
      {"lifecycle-conformance", "transition tables match the standard event tables",
       [] { return tk::check_lifecycle_conformance(); }},
      {"complaints-corpus", "complaints scenario corpus (a)-(h) passes",
       [] { return tk::check_scenario_corpus(); }},
      {"applicability-matrix", "validator matches the annotator applicability matrix",
       [] { return tk::check_applicability_matrix(); }},
      {"replay-determinism", "restore is byte-identical; snapshot interval invariant",
       [] { return tk::check_replay_determinism(); }},
      {"small-model-oracle", "engine reachable states equal the brute-force reference",
       [] { return tk::check_small_model_oracle(400, 20261014); }},
      {"required-semantics", "auto-complete never outruns required or started items",
       [] { return tk::check_required_semantics(1500, 7); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    CheckResult r;
    try {
      r = c.check();
    } catch (const std::exception& e) {
      r.fail(std::string("exception: ") + e.what());
      r.detail = r.failures.front();
    }
    std::printf("%s %s: %s (%s)\n", r.ok ? "PASS" : "FAIL", c.id, c.title, r.detail.c_str());
    for (std::size_t i = 0; i < r.failures.size() && i < 10; ++i) {
      std::printf("    %s\n", r.failures[i].c_str());
    }
    if (!r.ok) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
