#include "pgt/harness.hpp"

#include <cmath>
#include <sstream>

#include "pgt/detail/text.hpp"

namespace pgt {

using detail::format_double;

double improvement_percent(double result, double base) {
  if (result == base) return 0.0;
  return (result - base) / base * 100.0;
}

MetricReport average_metrics(const std::vector<SampleTriplet>& samples,
                             const Denoiser& denoiser) {
  if (samples.empty()) throw ImageError("cannot evaluate an empty split");
  MetricReport sum{0.0, 0.0, 0.0};
  for (const auto& s : samples) {
    const MetricReport m = denoiser ? compare(denoiser(s.noisy), s.clean) : compare(s.noisy, s.clean);
    sum.mse += m.mse;
    sum.ssim += m.ssim;
    sum.psnr += m.psnr;
  }
  const double n = static_cast<double>(samples.size());
  return {sum.mse / n, sum.ssim / n, sum.psnr / n};
}

EvalRow make_row(std::string label, const MetricReport& m, const MetricReport& b) {
  EvalRow r;
  r.label = std::move(label);
  r.mse = m.mse;
  r.ssim = m.ssim;
  r.psnr = m.psnr;
  r.mse_improvement = improvement_percent(m.mse, b.mse);
  r.ssim_improvement = improvement_percent(m.ssim, b.ssim);
  r.psnr_improvement = improvement_percent(m.psnr, b.psnr);
  return r;
}

EvalRow no_enhance_row(const std::vector<SampleTriplet>& samples) {
  const MetricReport b = average_metrics(samples);
  return make_row("No enhance", b, b);
}

GrayImage denoise(const ModelGraph& graph, const GrayImage& noisy, GrayImage* binary_out) {
  const Tensor x = Tensor::from({1, 1, noisy.height, noisy.width}, noisy.pixels);
  const ForwardOutputs out = infer(graph, x);
  const auto d = out.main.data();
  GrayImage img(noisy.height, noisy.width, std::vector<double>(d.begin(), d.end()));
  if (binary_out) {
    if (out.binary.defined()) {
      const auto b = out.binary.data();
      *binary_out = GrayImage(noisy.height, noisy.width, std::vector<double>(b.begin(), b.end()));
    } else {
      *binary_out = GrayImage();
    }
  }
  return img;
}

Denoiser model_denoiser(const ModelGraph& graph) {
  return [&graph](const GrayImage& img) { return denoise(graph, img); };
}

std::string eval_to_csv(const std::vector<EvalRow>& rows) {
  std::string out(kEvalHeader);
  out += '\n';
  for (const auto& r : rows) {
    if (r.label.find_first_of(",\n") != std::string::npos) {
      throw ImageError("eval row label may not contain ',' or newlines: " + r.label);
    }
    out += r.label + ',' + format_double(r.mse) + ',' + format_double(r.ssim) + ',' +
           format_double(r.psnr) + ',' + format_double(r.mse_improvement) + ',' +
           format_double(r.ssim_improvement) + ',' + format_double(r.psnr_improvement) + '\n';
  }
  return out;
}

std::vector<EvalRow> eval_from_csv(std::string_view text) {
  auto lines = detail::split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != kEvalHeader) {
    throw ImageError("eval csv: missing or unexpected header");
  }
  std::vector<EvalRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::split(lines[i], ',');
    if (f.size() != 7) throw ImageError("eval csv: malformed row " + std::to_string(i));
    EvalRow r;
    r.label = std::string(f[0]);
    double* dst[] = {&r.mse, &r.ssim, &r.psnr, &r.mse_improvement, &r.ssim_improvement,
                     &r.psnr_improvement};
    for (std::size_t k = 0; k < 6; ++k) {
      auto v = detail::parse_double(f[k + 1]);
      if (!v) throw ImageError("eval csv: bad number in row " + std::to_string(i));
      *dst[k] = *v;
    }
    rows.push_back(r);
  }
  return rows;
}

std::string format_eval_table(const std::vector<EvalRow>& rows) {
  std::size_t width = 10;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream o;
  auto pad = [&](const std::string& s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  auto cell = [&](double v, int digits) { return pad(detail::format_fixed(v, digits), 12); };
  o << pad("model", width + 2) << pad("MSE", 12) << pad("SSIM", 12) << pad("PSNR", 12)
    << pad("MSE %", 12) << pad("SSIM %", 12) << "PSNR %\n";
  for (const auto& r : rows) {
    o << pad(r.label, width + 2) << cell(r.mse, 6) << cell(r.ssim, 4) << cell(r.psnr, 4)
      << cell(r.mse_improvement, 2) << cell(r.ssim_improvement, 2)
      << detail::format_fixed(r.psnr_improvement, 2) << "\n";
  }
  return o.str();
}

std::string inspect_report(const ModelGraph& g) {
  std::ostringstream o;
  o << "variant: " << to_string(g.variant()) << "\n"
    << "policy: " << g.policy().label() << "\n"
    << "base_channels: " << g.options.base_channels << "\n"
    << "blocks: " << g.blocks.size() << "\n"
    << "parameters: " << g.parameter_count() << "\n\n"
    << "stage,segment,channels,activation,epsilon\n";
  for (const auto& b : g.blocks) {
    o << b.stage << ',' << to_string(b.branch) << ',' << b.channels << ','
      << to_string(b.activation) << ',' << format_double(b.epsilon) << "\n";
  }
  o << "\nlayer,segment,shape,parameters,phase\n";
  for (const auto& c : g.convs) {
    o << c.name << ',' << to_string(c.segment) << ',' << c.out_channels << 'x' << c.in_channels
      << 'x' << c.kernel << 'x' << c.kernel << ',' << c.parameter_count() << ','
      << (c.phase1 ? "1+2" : "2") << "\n";
  }
  if (!g.edges.empty()) {
    o << "\nconcat edges\n";
    for (const auto& e : g.edges) o << e.source << " -> " << e.target << "\n";
  }
  return o.str();
}

AblationResult ablate_scaling(const TrainConfig& base, const TrainingSet& data,
                              const std::function<void(const std::string&)>& log) {
  AblationResult res;
  const ScalingPolicy policies[] = {ScalingPolicy::proposed(), ScalingPolicy::all_positive(61.0),
                                    ScalingPolicy::all_positive(85.0)};
  std::vector<LossTrace> traces;
  for (const auto& pol : policies) {
    TrainConfig cfg = base;
    cfg.variant = Variant::block84_multitask;
    cfg.policy = pol.kind;
    cfg.alpha = pol.alpha;
    Trainer t(cfg, data);
    AblationRun run;
    run.policy = pol;
    run.options = t.graph().options;
    for (const auto& b : t.graph().blocks) run.epsilons.push_back(b.epsilon);
    if (log) log("training " + pol.label() + " for " + std::to_string(t.total_steps()) + " steps");
    t.run([&](const StepReport& r) {
      if (log && (r.step % 25 == 0 || r.step + 1 == t.total_steps())) {
        log(pol.label() + " step " + std::to_string(r.step) + " loss " +
            format_double(r.terms.total));
      }
    });
    run.trace = t.trace();
    traces.push_back(run.trace);
    res.runs.push_back(std::move(run));
  }
  res.comparison = loss_trace_compare(traces);
  const double proposed = res.comparison.summaries[0].final_loss;
  for (std::size_t k = 1; k < res.comparison.summaries.size(); ++k) {
    if (proposed > res.comparison.summaries[k].final_loss) {
      res.soft_check_failures.push_back(res.comparison.summaries[k].label);
    }
  }
  return res;
}

}  // namespace pgt
