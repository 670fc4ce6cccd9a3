#include "gexse/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>

#include "gexse/error.hpp"

namespace gexse {

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < k; ++p) s += at(truth, p);
    return s;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k; ++i) s += at(i, i);
    return s;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
    std::vector<double> out(k * k, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
        const auto rs = row_sum(t);
        if (rs == 0) continue;
        for (std::size_t p = 0; p < k; ++p) out[t * k + p] = static_cast<double>(at(t, p)) / static_cast<double>(rs);
    }
    return out;
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, std::size_t k,
                          std::vector<std::string> label_names) {
    if (preds.size() != labels.size()) {
        throw_shape("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
    }
    if (k == 0) throw_usage("confusion: k must be positive");
    if (label_names.empty()) {
        for (std::size_t i = 0; i < k; ++i) label_names.push_back("class_" + std::to_string(i));
    }
    if (label_names.size() != k) throw_usage("confusion: label_names size differs from k");
    ConfusionMatrix cm;
    cm.k = k;
    cm.counts.assign(k * k, 0);
    cm.label_names = std::move(label_names);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i];
        const int t = labels[i];
        if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= k || static_cast<std::size_t>(t) >= k) {
            throw_data("confusion: label out of range at index " + std::to_string(i) + " (pred " +
                       std::to_string(p) + ", true " + std::to_string(t) + ", k " + std::to_string(k) + ")");
        }
        ++cm.counts[static_cast<std::size_t>(t) * k + static_cast<std::size_t>(p)];
    }
    return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    MetricsReport r;
    r.label_names = cm.label_names;
    r.per_class.resize(cm.k);
    for (std::size_t c = 0; c < cm.k; ++c) {
        const double tp = static_cast<double>(cm.at(c, c));
        std::uint64_t predicted = 0;
        for (std::size_t t = 0; t < cm.k; ++t) predicted += cm.at(t, c);
        const std::uint64_t support = cm.row_sum(c);
        ClassMetrics& m = r.per_class[c];
        m.support = support;
        if (predicted > 0) {
            m.precision = tp / static_cast<double>(predicted);
        } else {
            m.undefined = true;
        }
        if (support > 0) {
            m.recall = tp / static_cast<double>(support);
        } else {
            m.undefined = true;
            m.precision = 0.0;
        }
        if (m.precision + m.recall > 0.0) {
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        } else {
            m.f1 = 0.0;
        }
        r.macro_precision += m.precision;
        r.macro_recall += m.recall;
        r.macro_f1 += m.f1;
    }
    const double k = static_cast<double>(cm.k);
    r.macro_precision /= k;
    r.macro_recall /= k;
    r.macro_f1 /= k;
    const auto total = cm.total();
    r.accuracy = total > 0 ? static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
    return r;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw_data("cannot write " + p.string());
    os << std::setprecision(17);
    return os;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

void emit_report(const MetricsReport& report, const ConfusionMatrix& cm, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw_data("cannot create report directory " + dir.string() + ": " + ec.message());

    {
        auto os = open_out(dir / "per_class.csv");
        os << "label,precision,recall,f1,support,undefined\n";
        for (std::size_t c = 0; c < report.per_class.size(); ++c) {
            const auto& m = report.per_class[c];
            os << csv_field(report.label_names[c]) << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ','
               << m.support << ',' << (m.undefined ? 1 : 0) << '\n';
        }
        os << "macro," << report.macro_precision << ',' << report.macro_recall << ',' << report.macro_f1 << ','
           << cm.total() << ",0\n";
    }
    {
        nlohmann::json j;
        j["schema"] = "gexse.metrics/1";
        j["k"] = cm.k;
        j["samples"] = cm.total();
        j["accuracy"] = report.accuracy;
        j["macro_precision"] = report.macro_precision;
        j["macro_recall"] = report.macro_recall;
        j["macro_f1"] = report.macro_f1;
        nlohmann::json classes = nlohmann::json::array();
        for (std::size_t c = 0; c < report.per_class.size(); ++c) {
            const auto& m = report.per_class[c];
            classes.push_back({{"label", report.label_names[c]},
                               {"precision", m.precision},
                               {"recall", m.recall},
                               {"f1", m.f1},
                               {"support", m.support},
                               {"undefined", m.undefined}});
        }
        j["classes"] = std::move(classes);
        auto os = open_out(dir / "summary.json");
        os << j.dump(2) << '\n';
    }
    const auto write_matrix = [&](const char* name, auto value_at) {
        auto os = open_out(dir / name);
        os << "label";
        for (const auto& n : cm.label_names) os << ',' << csv_field(n);
        os << '\n';
        for (std::size_t t = 0; t < cm.k; ++t) {
            os << csv_field(cm.label_names[t]);
            for (std::size_t p = 0; p < cm.k; ++p) os << ',' << value_at(t, p);
            os << '\n';
        }
    };
    write_matrix("confusion_counts.csv", [&](std::size_t t, std::size_t p) { return cm.at(t, p); });
    const auto norm = cm.row_normalized();
    write_matrix("confusion_normalized.csv", [&](std::size_t t, std::size_t p) { return norm[t * cm.k + p]; });
}

}  // namespace gexse
