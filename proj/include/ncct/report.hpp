#pragma once

#include <string>
#include <vector>

#include "ncct/dataset.hpp"
#include "ncct/matrix.hpp"
#include "ncct/model.hpp"
#include "ncct/trainer.hpp"

namespace ncct {

// Doubles are printed with %.17g so every written value reparses to the
// identical bits; identical runs therefore produce byte-identical files
// (with timing = off, which pins the seconds column to 0).

std::string format_double(double v);

// epoch,test_acc,L_s,L_c,confident_frac,seconds
std::string metrics_csv(const std::vector<EpochStats>& epochs);
void write_metrics_csv(const std::vector<EpochStats>& epochs, const std::string& path);
std::vector<EpochStats> read_metrics_csv(const std::string& path);

// epoch,class,confident_frac (long format, one row per class per epoch)
std::string class_fractions_csv(const std::vector<EpochStats>& epochs);

// mode,noise_kind,noise_rate,k,seed,max_acc,last5_mean
std::string sweep_csv(const std::vector<SweepEntry>& entries);
void write_sweep_csv(const std::vector<SweepEntry>& entries, const std::string& path);
std::vector<SweepEntry> read_sweep_csv(const std::string& path);

// Renderers for a confusion matrix (true labels on rows, predictions on columns).
std::string confusion_text(const Matrix& cm);
std::string confusion_csv(const Matrix& cm);

// Standalone well-formed SVG documents.
std::string accuracy_svg(const std::vector<EpochStats>& epochs);
std::string sweep_svg(const std::vector<SweepEntry>& entries); // one curve per noise kind/rate

void write_text_file(const std::string& content, const std::string& path);
std::string read_text_file(const std::string& path);

} // namespace ncct
