#pragma once

#include "dualsq/core.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dualsq {

/// Cost meters. One oracle_A call is one synchronized step in which every
/// agent evaluates grad f_i and prox g_i once; oracle_B counts products with
/// A_i / A_i' and evaluations of grad h* or prox h*, also per synchronized step.
struct Counters {
  std::int64_t comm_rounds = 0;
  std::int64_t oracle_A = 0;
  std::int64_t oracle_B = 0;

  Counters& operator+=(const Counters& o) {
    comm_rounds += o.comm_rounds;
    oracle_A += o.oracle_A;
    oracle_B += o.oracle_B;
    return *this;
  }
  bool operator==(const Counters&) const = default;
};

struct TraceRow {
  int k = 0;
  double gap = 0.0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double consensus_res = 0.0;
  std::int64_t comm_rounds = 0;
  std::int64_t oracle_A = 0;
  std::int64_t oracle_B = 0;
  int inner_iters = 0;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  /// Iterates after each outer step, filled only when requested.
  std::vector<BlockVec> x_history;
  std::vector<BlockVec> z_history;
  /// Exchanges spent on stopping tests; not part of comm_rounds.
  std::int64_t monitoring_rounds = 0;
};

inline const char* kTraceHeader = "k,gap,primal_res,dual_res,consensus_res,comm_rounds,oracle_A,oracle_B,inner_iters";

inline void write_trace_csv(std::ostream& out, const RunTrace& t) {
  out << kTraceHeader << '\n';
  char buf[512];
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17e,%.17e,%.17e,%.17e,%lld,%lld,%lld,%d\n", r.k, r.gap, r.primal_res,
                  r.dual_res, r.consensus_res, static_cast<long long>(r.comm_rounds),
                  static_cast<long long>(r.oracle_A), static_cast<long long>(r.oracle_B), r.inner_iters);
    out << buf;
  }
}

inline void write_trace_csv(const std::string& path, const RunTrace& t) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_trace_csv(out, t);
}

inline RunTrace read_trace_csv(std::istream& in) {
  RunTrace t;
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw Error("trace csv: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw Error("trace csv: expected 9 fields: " + line);
    TraceRow r;
    r.k = std::stoi(f[0]);
    r.gap = std::stod(f[1]);
    r.primal_res = std::stod(f[2]);
    r.dual_res = std::stod(f[3]);
    r.consensus_res = std::stod(f[4]);
    r.comm_rounds = std::stoll(f[5]);
    r.oracle_A = std::stoll(f[6]);
    r.oracle_B = std::stoll(f[7]);
    r.inner_iters = std::stoi(f[8]);
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace dualsq
