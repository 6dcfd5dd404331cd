#pragma once

// Global tolerance ladder. Construction-level checks use 1e-12, invariant
// checks 1e-10, and rank decisions 1e-9 relative to the largest singular
// value. Keep every call site on this ladder instead of inventing ad-hoc
// thresholds.
namespace sosync::tol {

inline constexpr double construction = 1e-12;
inline constexpr double invariant = 1e-10;
inline constexpr double rank_rel = 1e-9;

}  // namespace sosync::tol
