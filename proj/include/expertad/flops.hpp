#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace expertad {

// 1 multiply-add = 2 FLOPs; exponentials are counted on their own.
struct FlopCount {
  std::uint64_t multiply_adds = 0;
  std::uint64_t exponentials = 0;

  std::uint64_t total() const { return 2 * multiply_adds + exponentials; }

  FlopCount& operator+=(const FlopCount& o) {
    multiply_adds += o.multiply_adds;
    exponentials += o.exponentials;
    return *this;
  }
  friend FlopCount operator+(FlopCount a, const FlopCount& b) { return a += b; }
  friend bool operator==(const FlopCount&, const FlopCount&) = default;
};

/// One primitive op emitted by an instrumented kernel.
/// "matmul": (a x b) . (b x c), contributes a*b*c multiply-adds.
/// "softmax": a entries, contributes a exponentials.
struct OpRecord {
  std::string primitive;
  std::string label;
  std::uint64_t a = 0, b = 0, c = 0;
};

/// Caller-owned trace buffer; kernels append, nothing is global.
class FlopTrace {
 public:
  void matmul(const char* label, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    records_.push_back({"matmul", label, a, b, c});
  }
  void softmax(const char* label, std::uint64_t n) { records_.push_back({"softmax", label, n, 0, 0}); }
  void append(const FlopTrace& other) {
    records_.insert(records_.end(), other.records_.begin(), other.records_.end());
  }
  void clear() { records_.clear(); }

  std::span<const OpRecord> records() const { return records_; }
  std::vector<OpRecord>& mutable_records() { return records_; }

 private:
  std::vector<OpRecord> records_;
};

FlopCount flop_ledger(std::span<const OpRecord> trace);
/// Per-label breakdown of the same ledger.
std::map<std::string, FlopCount> flop_ledger_by_label(std::span<const OpRecord> trace);

}  // namespace expertad
