#include "ncct/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ncct/config.hpp"
#include "ncct/error.hpp"

namespace ncct {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

constexpr const char* kMetricsHeader = "epoch,test_acc,L_s,L_c,confident_frac,seconds";
constexpr const char* kSweepHeader = "mode,noise_kind,noise_rate,k,seed,max_acc,last5_mean";

std::string short_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const char* expected_header,
                                               std::size_t columns) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw FormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw FormatError(path + ": unexpected header '" + line + "'");
    std::vector<std::vector<std::string>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != columns)
            throw FormatError(path + " line " + std::to_string(lineno) + ": expected " +
                              std::to_string(columns) + " fields, got " +
                              std::to_string(fields.size()));
        rows.push_back(std::move(fields));
    }
    return rows;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

// Shared frame for both charts: y is always a [0,1] accuracy axis.
struct ChartFrame {
    double width = 640, height = 400;
    double left = 56, right = 16, top = 20, bottom = 44;
    double x_min = 0, x_max = 1;

    double px(double x) const {
        const double span = x_max > x_min ? x_max - x_min : 1.0;
        return left + (x - x_min) / span * (width - left - right);
    }
    double py(double y) const { // y in [0,1]
        return top + (1.0 - y) * (height - top - bottom);
    }

    void open(std::ostringstream& svg, const std::string& x_label,
              const std::string& y_label) const {
        svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
            << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
            << "\">\n";
        svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
            << "\" fill=\"white\"/>\n";
        for (int i = 0; i <= 10; ++i) {
            const double y = i / 10.0;
            svg << "<line x1=\"" << left << "\" y1=\"" << py(y) << "\" x2=\""
                << width - right << "\" y2=\"" << py(y)
                << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
            svg << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4
                << "\" font-size=\"11\" text-anchor=\"end\" fill=\"#333333\">"
                << short_double(y) << "</text>\n";
        }
        svg << "<line x1=\"" << left << "\" y1=\"" << py(0.0) << "\" x2=\""
            << width - right << "\" y2=\"" << py(0.0)
            << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        svg << "<line x1=\"" << left << "\" y1=\"" << py(0.0) << "\" x2=\"" << left
            << "\" y2=\"" << py(1.0) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 10
            << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333333\">"
            << xml_escape(x_label) << "</text>\n";
        svg << "<text x=\"14\" y=\"" << (py(0.0) + py(1.0)) / 2
            << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333333\""
            << " transform=\"rotate(-90 14 " << (py(0.0) + py(1.0)) / 2 << ")\">"
            << xml_escape(y_label) << "</text>\n";
    }

    void x_tick(std::ostringstream& svg, double x, const std::string& label) const {
        svg << "<line x1=\"" << px(x) << "\" y1=\"" << py(0.0) << "\" x2=\"" << px(x)
            << "\" y2=\"" << py(0.0) + 4 << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << px(x) << "\" y=\"" << py(0.0) + 16
            << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333333\">"
            << xml_escape(label) << "</text>\n";
    }

    void polyline(std::ostringstream& svg, const std::vector<std::pair<double, double>>& pts,
                  const char* color) const {
        svg << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) svg << ' ';
            svg << px(pts[i].first) << ',' << py(pts[i].second);
        }
        svg << "\"/>\n";
        for (const auto& [x, y] : pts)
            svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y)
                << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
};

} // namespace

std::string metrics_csv(const std::vector<EpochStats>& epochs) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const EpochStats& s : epochs) {
        out += std::to_string(s.epoch);
        out += ',';
        out += format_double(s.test_acc);
        out += ',';
        out += format_double(s.loss_s);
        out += ',';
        out += format_double(s.loss_c);
        out += ',';
        out += format_double(s.confident_fraction);
        out += ',';
        out += format_double(s.seconds);
        out += '\n';
    }
    return out;
}

void write_metrics_csv(const std::vector<EpochStats>& epochs, const std::string& path) {
    write_text_file(metrics_csv(epochs), path);
}

std::vector<EpochStats> read_metrics_csv(const std::string& path) {
    std::vector<EpochStats> epochs;
    for (const auto& f : read_csv(path, kMetricsHeader, 6)) {
        EpochStats s;
        s.epoch = static_cast<int>(parse_int_value("epoch", f[0]));
        s.test_acc = parse_double_value("test_acc", f[1]);
        s.loss_s = parse_double_value("L_s", f[2]);
        s.loss_c = parse_double_value("L_c", f[3]);
        s.confident_fraction = parse_double_value("confident_frac", f[4]);
        s.seconds = parse_double_value("seconds", f[5]);
        epochs.push_back(std::move(s));
    }
    return epochs;
}

std::string class_fractions_csv(const std::vector<EpochStats>& epochs) {
    std::string out = "epoch,class,confident_frac\n";
    for (const EpochStats& s : epochs)
        for (std::size_t c = 0; c < s.class_confident_fraction.size(); ++c) {
            out += std::to_string(s.epoch);
            out += ',';
            out += std::to_string(c);
            out += ',';
            out += format_double(s.class_confident_fraction[c]);
            out += '\n';
        }
    return out;
}

std::string sweep_csv(const std::vector<SweepEntry>& entries) {
    std::string out = kSweepHeader;
    out += '\n';
    for (const SweepEntry& e : entries) {
        out += mode_name(e.mode);
        out += ',';
        out += e.noise_kind;
        out += ',';
        out += format_double(e.noise_rate);
        out += ',';
        out += std::to_string(e.k);
        out += ',';
        out += std::to_string(e.seed);
        out += ',';
        out += format_double(e.max_acc);
        out += ',';
        out += format_double(e.last5_mean);
        out += '\n';
    }
    return out;
}

void write_sweep_csv(const std::vector<SweepEntry>& entries, const std::string& path) {
    write_text_file(sweep_csv(entries), path);
}

std::vector<SweepEntry> read_sweep_csv(const std::string& path) {
    std::vector<SweepEntry> entries;
    for (const auto& f : read_csv(path, kSweepHeader, 7)) {
        SweepEntry e;
        e.mode = mode_from_name(f[0]);
        e.noise_kind = f[1];
        e.noise_rate = parse_double_value("noise_rate", f[2]);
        e.k = static_cast<int>(parse_int_value("k", f[3]));
        e.seed = parse_u64_value("seed", f[4]);
        e.max_acc = parse_double_value("max_acc", f[5]);
        e.last5_mean = parse_double_value("last5_mean", f[6]);
        entries.push_back(std::move(e));
    }
    return entries;
}

std::string confusion_text(const Matrix& cm) {
    int width = 5;
    for (int i = 0; i < cm.rows; ++i)
        for (int j = 0; j < cm.cols; ++j) {
            const int digits =
                static_cast<int>(std::to_string(static_cast<long long>(cm.at(i, j))).size());
            width = std::max(width, digits + 2);
        }
    std::ostringstream out;
    out << "true\\pred";
    for (int j = 0; j < cm.cols; ++j) {
        std::string h = std::to_string(j);
        out << std::string(width - h.size(), ' ') << h;
    }
    out << '\n';
    for (int i = 0; i < cm.rows; ++i) {
        std::string h = std::to_string(i);
        out << std::string(9 - h.size(), ' ') << h;
        for (int j = 0; j < cm.cols; ++j) {
            std::string v = std::to_string(static_cast<long long>(cm.at(i, j)));
            out << std::string(width - v.size(), ' ') << v;
        }
        out << '\n';
    }
    return out.str();
}

std::string confusion_csv(const Matrix& cm) {
    std::string out = "true_label";
    for (int j = 0; j < cm.cols; ++j) {
        out += ",pred_";
        out += std::to_string(j);
    }
    out += '\n';
    for (int i = 0; i < cm.rows; ++i) {
        out += std::to_string(i);
        for (int j = 0; j < cm.cols; ++j) {
            out += ',';
            out += std::to_string(static_cast<long long>(cm.at(i, j)));
        }
        out += '\n';
    }
    return out;
}

std::string accuracy_svg(const std::vector<EpochStats>& epochs) {
    if (epochs.empty()) throw InvalidArgument("no epochs to plot");
    ChartFrame frame;
    frame.x_min = epochs.front().epoch;
    frame.x_max = epochs.back().epoch;
    std::ostringstream svg;
    frame.open(svg, "epoch", "test accuracy");

    const int span = std::max(1, static_cast<int>(frame.x_max - frame.x_min));
    const int tick_step = std::max(1, (span + 9) / 10);
    for (int e = static_cast<int>(frame.x_min); e <= static_cast<int>(frame.x_max);
         e += tick_step)
        frame.x_tick(svg, e, std::to_string(e));

    std::vector<std::pair<double, double>> pts;
    pts.reserve(epochs.size());
    for (const EpochStats& s : epochs) pts.emplace_back(s.epoch, s.test_acc);
    frame.polyline(svg, pts, kPalette[0]);
    svg << "</svg>\n";
    return svg.str();
}

std::string sweep_svg(const std::vector<SweepEntry>& entries) {
    if (entries.empty()) throw InvalidArgument("no sweep entries to plot");

    struct Curve {
        std::string label;
        std::vector<std::pair<double, double>> pts;
    };
    std::vector<Curve> curves;
    bool multi_mode = false;
    for (const SweepEntry& e : entries)
        if (e.mode != entries.front().mode) multi_mode = true;
    int k_min = entries.front().k, k_max = entries.front().k;
    for (const SweepEntry& e : entries) {
        k_min = std::min(k_min, e.k);
        k_max = std::max(k_max, e.k);
        std::string label = e.noise_kind + " " + short_double(e.noise_rate);
        if (multi_mode) label = mode_name(e.mode) + " " + label;
        auto it = std::find_if(curves.begin(), curves.end(),
                               [&](const Curve& c) { return c.label == label; });
        if (it == curves.end()) {
            curves.push_back({label, {}});
            it = curves.end() - 1;
        }
        it->pts.emplace_back(e.k, e.last5_mean);
    }
    for (Curve& c : curves)
        std::sort(c.pts.begin(), c.pts.end());

    ChartFrame frame;
    frame.x_min = k_min;
    frame.x_max = k_max;
    std::ostringstream svg;
    frame.open(svg, "k", "test accuracy (mean of final 5 epochs)");
    for (int k = k_min; k <= k_max; ++k) frame.x_tick(svg, k, std::to_string(k));

    for (std::size_t i = 0; i < curves.size(); ++i) {
        const char* color = kPalette[i % kPaletteSize];
        frame.polyline(svg, curves[i].pts, color);
        const double ly = frame.top + 14.0 * (static_cast<double>(i) + 1.0);
        svg << "<rect x=\"" << frame.width - frame.right - 150 << "\" y=\"" << ly - 9
            << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        svg << "<text x=\"" << frame.width - frame.right - 136 << "\" y=\"" << ly
            << "\" font-size=\"11\" fill=\"#333333\">" << xml_escape(curves[i].label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_text_file(const std::string& content, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace ncct
