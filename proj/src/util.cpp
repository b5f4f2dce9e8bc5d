#include "primepatterns/util.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "primepatterns/error.hpp"

namespace primepatterns {

std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid_parameter";
    case ErrorKind::domain: return "domain";
    case ErrorKind::budget: return "budget";
    case ErrorKind::cache_miss: return "cache_miss";
    case ErrorKind::io: return "io";
    case ErrorKind::unit: return "unit";
    case ErrorKind::singular_fit: return "singular_fit";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::missing_window: return "missing_window";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::size: return "size";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_parameter: return 3;
    case ErrorKind::domain: return 4;
    case ErrorKind::budget: return 5;
    case ErrorKind::cache_miss: return 6;
    case ErrorKind::io: return 7;
    case ErrorKind::unit: return 8;
    case ErrorKind::singular_fit: return 9;
    case ErrorKind::convergence: return 10;
    case ErrorKind::missing_window: return 11;
    case ErrorKind::empty_input: return 12;
    case ErrorKind::size: return 13;
  }
  return 1;
}

std::string format_real(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string format_real(long double v) { return format_real(static_cast<double>(v)); }

std::uint64_t gcd_u64(std::uint64_t a, std::uint64_t b) {
  while (b != 0) {
    std::uint64_t t = a % b;
    a = b;
    b = t;
  }
  return a;
}

int euler_phi(int q) {
  int result = q;
  int n = q;
  for (int p = 2; p * p <= n; ++p) {
    if (n % p == 0) {
      while (n % p == 0) n /= p;
      result -= result / p;
    }
  }
  if (n > 1) result -= result / n;
  return result;
}

bool is_prime_small(std::uint64_t n) {
  if (n < 2) return false;
  if (n % 2 == 0) return n == 2;
  for (std::uint64_t d = 3; d * d <= n; d += 2)
    if (n % d == 0) return false;
  return true;
}

std::uint64_t parse_count(const std::string& text) {
  std::uint64_t exact = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), exact);
  if (ec == std::errc() && ptr == text.data() + text.size() && !text.empty()) return exact;
  // scientific forms such as 1e8, exact up to 2^53
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || errno != 0 || !(v >= 0) || v > 9007199254740992.0 ||
      std::floor(v) != v)
    fail(ErrorKind::invalid_parameter, "not a non-negative integer: '" + text + "'");
  return static_cast<std::uint64_t>(v);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
  if (workers < 1) fail(ErrorKind::invalid_parameter, "worker count must be >= 1");
  std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

int default_workers() {
  const char* env = std::getenv("PRIMEPATTERNS_WORKERS");
  if (!env) return 1;
  std::uint64_t v = 0;
  try {
    v = parse_count(env);
  } catch (const Error&) {
    v = 0;
  }
  if (v < 1 || v > 1024)
    fail(ErrorKind::invalid_parameter, std::string("PRIMEPATTERNS_WORKERS must be an integer in [1,1024], got '") + env + "'");
  return static_cast<int>(v);
}

}  // namespace primepatterns
