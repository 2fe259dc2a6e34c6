#include "expertad/flops.hpp"

#include "expertad/error.hpp"

namespace expertad {
namespace {

FlopCount count_one(const OpRecord& r) {
  FlopCount c;
  if (r.primitive == "matmul") {
    c.multiply_adds = r.a * r.b * r.c;
  } else if (r.primitive == "softmax") {
    c.exponentials = r.a;
  } else {
    fail(ErrorKind::config, "flop_ledger: unknown primitive '" + r.primitive + "'");
  }
  return c;
}

}  // namespace

FlopCount flop_ledger(std::span<const OpRecord> trace) {
  FlopCount total;
  for (const auto& r : trace) total += count_one(r);
  return total;
}

std::map<std::string, FlopCount> flop_ledger_by_label(std::span<const OpRecord> trace) {
  std::map<std::string, FlopCount> out;
  for (const auto& r : trace) out[r.label] += count_one(r);
  return out;
}

}  // namespace expertad
