#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "clampcap/metrics/metrics.hpp"

namespace testing {

inline clampcap::metrics::Tokens words(const std::string& s) {
  clampcap::metrics::Tokens out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline clampcap::metrics::EvalPair pair(const std::string& id, const std::string& cand,
                                        std::initializer_list<const char*> refs) {
  clampcap::metrics::EvalPair p{id, words(cand), {}};
  for (const char* r : refs) p.references.push_back(words(r));
  return p;
}

/// Five-clip corpus; the expected scores come from tests/oracles/metric_fixture.py.
inline std::vector<clampcap::metrics::EvalPair> fixture() {
  return {
      pair("c1", "a dog is barking loudly",
           {"a dog barks loudly", "the dog is barking", "a loud dog is barking outside"}),
      pair("c2", "birds are singing in the trees",
           {"birds sing in the trees", "many birds are chirping", "birds singing in a forest"}),
      pair("c3", "a car passes by", {"a car drives past on a wet road", "a vehicle passes by quickly"}),
      pair("c4", "rain falls on a roof",
           {"rain is falling on a metal roof", "heavy rain falls on the roof", "rain falls on a tin roof"}),
      pair("c5", "the the the", {"the cat", "a cat meows"}),
  };
}

struct FixtureOracle {
  double bleu[4];
  double rouge_l, meteor, cider;
};

inline constexpr FixtureOracle kFixtureOracle{
    {0.9130434782608695, 0.7801894976054939, 0.572144349093016, 0.3911620494702815},
    0.6835804057693459,
    0.6066854940956677,
    2.2664423805056915};

}  // namespace testing
