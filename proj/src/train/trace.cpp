#include <algorithm>
#include <sstream>

#include "pgt/detail/text.hpp"
#include "pgt/trainer.hpp"

namespace pgt {

using detail::format_double;

std::string trace_to_csv(const LossTrace& trace) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& r : trace.rows) {
    out += std::to_string(r.step) + ',' + std::to_string(r.phase) + ',' +
           format_double(r.loss_total) + ',' + format_double(r.loss_mse) + ',' +
           format_double(r.loss_lap) + ',' + format_double(r.loss_ssim) + ',' +
           format_double(r.loss_binary) + ',' + format_double(r.loss_main) + '\n';
  }
  return out;
}

LossTrace trace_from_csv(std::string_view text, std::string label) {
  LossTrace t;
  t.label = std::move(label);
  auto lines = detail::split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || detail::trim(lines.front()) != kTraceHeader) {
    throw TrainError("loss trace: missing or unexpected header");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::split(detail::trim(lines[i]), ',');
    auto bad = [&] { return TrainError("loss trace: malformed row " + std::to_string(i)); };
    if (f.size() != 8) throw bad();
    TraceRow r;
    auto step = detail::parse_int<std::int64_t>(f[0]);
    auto phase = detail::parse_int<int>(f[1]);
    if (!step || !phase) throw bad();
    r.step = *step;
    r.phase = *phase;
    double* dst[] = {&r.loss_total, &r.loss_mse, &r.loss_lap, &r.loss_ssim, &r.loss_binary,
                     &r.loss_main};
    for (std::size_t k = 0; k < 6; ++k) {
      auto v = detail::parse_double(f[k + 2]);
      if (!v) throw bad();
      *dst[k] = *v;
    }
    t.rows.push_back(r);
  }
  return t;
}

TraceComparison loss_trace_compare(const std::vector<LossTrace>& traces) {
  if (traces.size() < 2) throw TrainError("loss_trace_compare needs at least two traces");
  TraceComparison cmp;
  for (const auto& r : traces.front().rows) cmp.steps.push_back(r.step);
  if (cmp.steps.empty()) throw TrainError("loss_trace_compare: empty trace");
  for (const auto& t : traces) {
    if (t.rows.size() != cmp.steps.size()) {
      throw TrainError("loss_trace_compare: trace '" + t.label + "' has a different step grid");
    }
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (t.rows[i].step != cmp.steps[i]) {
        throw TrainError("loss_trace_compare: trace '" + t.label + "' has a different step grid");
      }
    }
  }
  cmp.table.assign(cmp.steps.size(), std::vector<double>(traces.size()));
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto& rows = traces[k].rows;
    TraceSummary s;
    s.label = traces[k].label;
    s.initial_loss = rows.front().loss_total;
    s.final_loss = rows.back().loss_total;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      cmp.table[i][k] = rows[i].loss_total;
      if (i > 0) {
        s.auc += 0.5 * (rows[i].loss_total + rows[i - 1].loss_total) *
                 static_cast<double>(rows[i].step - rows[i - 1].step);
      }
    }
    cmp.summaries.push_back(s);
  }
  std::vector<std::size_t> order(traces.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cmp.summaries[a].final_loss < cmp.summaries[b].final_loss;
  });
  for (auto k : order) cmp.final_loss_order.push_back(cmp.summaries[k].label);
  return cmp;
}

std::string format_comparison(const TraceComparison& cmp) {
  std::ostringstream o;
  o << "trace,initial_loss,final_loss,auc\n";
  for (const auto& s : cmp.summaries) {
    o << s.label << ',' << format_double(s.initial_loss) << ',' << format_double(s.final_loss)
      << ',' << format_double(s.auc) << '\n';
  }
  o << "final loss order (lowest first):";
  for (const auto& l : cmp.final_loss_order) o << ' ' << l;
  o << "\n\nstep";
  for (const auto& s : cmp.summaries) o << ',' << s.label;
  for (std::size_t k = 1; k < cmp.summaries.size(); ++k) {
    o << ',' << cmp.summaries[k].label << "-" << cmp.summaries[0].label;
  }
  o << '\n';
  for (std::size_t i = 0; i < cmp.steps.size(); ++i) {
    o << cmp.steps[i];
    for (double v : cmp.table[i]) o << ',' << format_double(v);
    for (std::size_t k = 1; k < cmp.table[i].size(); ++k) {
      o << ',' << format_double(cmp.table[i][k] - cmp.table[i][0]);
    }
    o << '\n';
  }
  return o.str();
}

}  // namespace pgt
