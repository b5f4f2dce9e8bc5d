#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace primepatterns {

// 17 significant digits, shortest exponent form; stable across runs.
std::string format_real(double v);
std::string format_real(long double v);

std::uint64_t gcd_u64(std::uint64_t a, std::uint64_t b);
int euler_phi(int q);
bool is_prime_small(std::uint64_t n);

// Parses "1e8", "100000" or "1.5e6" into an integer, rejecting fractions.
std::uint64_t parse_count(const std::string& text);

// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
// handled exactly once; callers write into slot i so the result order never
// depends on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

int default_workers();

}  // namespace primepatterns
