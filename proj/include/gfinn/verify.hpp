#pragma once

// Structural invariant and kernel-certificate sweeps over random parameter
// draws and random in-domain states.

#include <cstdint>
#include <string>
#include <vector>

#include "gfinn/generic.hpp"

namespace gfinn {

struct StructureStats {
  double skew = 0.0;        // max |L + L^T|
  double min_eig = 0.0;     // min eigenvalue of M (capped above at 0)
  double degeneracy_l = 0.0;  // max |L grad S| / (1 + |grad S|)
  double degeneracy_m = 0.0;  // max |M grad E| / (1 + |grad E|)
  Index states = 0;
};

// Batched over the columns of Z on one tape.
StructureStats structure_stats(const GenericModel& model, const Matrix& Z);

struct StructureCheck {
  std::string problem, method, case_tag;
  StructureStats worst;
  int draws = 0;
  bool degeneracy_required = true;  // false for spnn, whose operators are unconstrained
  bool passed() const;
};

// Every structure-preserving (method, case) of the problem: `draws` parameter
// draws, each at `states` fresh initial-distribution states.
std::vector<StructureCheck> structure_sweep(const std::string& problem, int draws, int states, std::uint64_t seed);

struct CertificateSweep {
  std::string problem;
  int states = 0;
  int passed = 0;
  double membership = 0.0, orthonormality = 0.0, factorization = 0.0;
  std::string first_failure;
  bool ok() const { return passed == states; }
};

CertificateSweep certificate_sweep(const std::string& problem, int states, std::uint64_t seed, double tol = 1e-10);

}  // namespace gfinn
