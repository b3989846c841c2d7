// evaluation.hpp -- runs both conversion directions over held-out pairs and
// assembles the per-source and aggregate metric reports.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtx/inference.hpp"
#include "dtx/metrics.hpp"

namespace dtx {

struct EvalOptions {
  BeamConfig d2t_beam{5, 64, 0.0};
  // Length-normalized scoring for structured outputs; plain beam search
  // under-generates triples on multi-attribute inputs.
  BeamConfig t2d_beam{8, 64, 1.0};
  bool diversity = false;
  int diversity_k = 10;
  int diversity_seeds = 10;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct DiversityStats {
  double self_bleu_mean{0.0}, self_bleu_ci{0.0};
  double distinct1_mean{0.0}, distinct1_ci{0.0};
  double distinct2_mean{0.0}, distinct2_ci{0.0};
  double bleu_mean{0.0}, bleu_ci{0.0};
};

struct SourceEval {
  std::string source;
  EvalReport report;
  int n_d2t_examples{0};
  int n_t2d_examples{0};
};

struct EvalResult {
  std::vector<SourceEval> per_source;
  EvalReport aggregate;
  DiversityStats diversity;  // populated when EvalOptions.diversity
  int n_t2d_examples{0};
  int n_format_errors{0};
};

EvalResult run_evaluation(const Model& model, const Vocab& vocab,
                          const std::vector<Source>& sources, const EvalOptions& options);

void write_report_json(const EvalResult& result, const std::string& path);
void write_report_csv(const EvalResult& result, const std::string& path);

}  // namespace dtx
