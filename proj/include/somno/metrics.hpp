#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "somno/errors.hpp"
#include "somno/recording.hpp"

namespace somno {

struct ConfusionMatrix {
    std::array<std::array<std::int64_t, 4>, 4> counts{}; // rows: true, cols: predicted

    std::int64_t total() const {
        std::int64_t n = 0;
        for (const auto& row : counts)
            for (std::int64_t c : row) n += c;
        return n;
    }
    std::int64_t trace() const {
        std::int64_t n = 0;
        for (int i = 0; i < 4; ++i)
            n += counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
        return n;
    }
    std::int64_t row_sum(int r) const {
        std::int64_t n = 0;
        for (std::int64_t c : counts[static_cast<std::size_t>(r)]) n += c;
        return n;
    }
    std::int64_t col_sum(int c) const {
        std::int64_t n = 0;
        for (int r = 0; r < 4; ++r) n += counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        return n;
    }
    bool operator==(const ConfusionMatrix& o) const { return counts == o.counts; }
};

template <typename T>
inline ConfusionMatrix confusion(const std::vector<T>& truth, const std::vector<T>& pred) {
    if (truth.empty()) throw DataError("confusion: empty input");
    if (truth.size() != pred.size())
        throw DataError("confusion: " + std::to_string(truth.size()) + " truths vs " +
                        std::to_string(pred.size()) + " predictions");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = static_cast<int>(truth[i]);
        const int p = static_cast<int>(pred[i]);
        if (t < 0 || t >= 4 || p < 0 || p >= 4)
            throw DataError("confusion: stage index outside 0..3");
        ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    const std::int64_t n = cm.total();
    if (n <= 0) throw DataError("accuracy: empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

/// Chance-corrected agreement. When expected agreement is 1 (a degenerate
/// single-class marginal), returns 1 for perfect observed agreement and 0
/// otherwise.
inline double cohen_kappa(const ConfusionMatrix& cm) {
    const std::int64_t n = cm.total();
    if (n <= 0) throw DataError("cohen_kappa: empty confusion matrix");
    const double dn = static_cast<double>(n);
    const double po = static_cast<double>(cm.trace()) / dn;
    double pe = 0.0;
    for (int i = 0; i < 4; ++i)
        pe += (static_cast<double>(cm.row_sum(i)) / dn) * (static_cast<double>(cm.col_sum(i)) / dn);
    if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

/// Diagonal over row sum per class; rows with no examples are NaN
/// ("undefined" in reports).
inline std::array<double, 4> per_class_recall(const ConfusionMatrix& cm) {
    std::array<double, 4> recall{};
    for (int i = 0; i < 4; ++i) {
        const std::int64_t rs = cm.row_sum(i);
        recall[static_cast<std::size_t>(i)] =
            rs == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : static_cast<double>(
                          cm.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)]) /
                          static_cast<double>(rs);
    }
    return recall;
}

struct EvalReport {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    double kappa = 0.0;
    std::array<double, 4> recall{};

    bool operator==(const EvalReport& o) const {
        if (!(confusion == o.confusion) || accuracy != o.accuracy || kappa != o.kappa) return false;
        for (int i = 0; i < 4; ++i) {
            const double a = recall[static_cast<std::size_t>(i)], b = o.recall[static_cast<std::size_t>(i)];
            if (std::isnan(a) != std::isnan(b)) return false;
            if (!std::isnan(a) && a != b) return false;
        }
        return true;
    }
};

inline EvalReport evaluate_confusion(const ConfusionMatrix& cm) {
    EvalReport rep;
    rep.confusion = cm;
    rep.accuracy = accuracy(cm);
    rep.kappa = cohen_kappa(cm);
    rep.recall = per_class_recall(cm);
    return rep;
}

template <typename T>
inline EvalReport evaluate(const std::vector<T>& truth, const std::vector<T>& pred) {
    return evaluate_confusion(confusion(truth, pred));
}

/// Human-readable report: row-normalized confusion percentages at one
/// decimal, plus the scalar metrics.
inline std::string render_report(const EvalReport& rep) {
    static const char* names[4] = {"Wake", "Light", "Deep", "REM"};
    char buf[64];
    std::string out = "Confusion matrix (row-normalized %):\n";
    out += "        ";
    for (const char* n : names) {
        std::snprintf(buf, sizeof buf, "%7s", n);
        out += buf;
    }
    out += '\n';
    for (int r = 0; r < 4; ++r) {
        std::snprintf(buf, sizeof buf, "%7s ", names[r]);
        out += buf;
        const std::int64_t rs = rep.confusion.row_sum(r);
        for (int c = 0; c < 4; ++c) {
            if (rs == 0)
                std::snprintf(buf, sizeof buf, "%7s", "-");
            else
                std::snprintf(buf, sizeof buf, "%7.1f",
                              100.0 *
                                  static_cast<double>(rep.confusion.counts[static_cast<std::size_t>(
                                      r)][static_cast<std::size_t>(c)]) /
                                  static_cast<double>(rs));
            out += buf;
        }
        out += '\n';
    }
    std::snprintf(buf, sizeof buf, "Accuracy: %.4f\n", rep.accuracy);
    out += buf;
    std::snprintf(buf, sizeof buf, "Kappa:    %.4f\n", rep.kappa);
    out += buf;
    out += "Recall:  ";
    for (int r = 0; r < 4; ++r) {
        const double v = rep.recall[static_cast<std::size_t>(r)];
        if (std::isnan(v))
            std::snprintf(buf, sizeof buf, " %s undefined", names[r]);
        else
            std::snprintf(buf, sizeof buf, " %s %.1f%%", names[r], 100.0 * v);
        out += buf;
    }
    out += '\n';
    return out;
}

/// Machine-readable twin: {counts, accuracy, kappa, recall}; undefined
/// recalls serialize as null.
inline std::string report_json(const EvalReport& rep) {
    nlohmann::json j;
    for (int r = 0; r < 4; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 4; ++c)
            row.push_back(rep.confusion.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
        j["counts"].push_back(row);
    }
    j["accuracy"] = rep.accuracy;
    j["kappa"] = rep.kappa;
    for (int r = 0; r < 4; ++r) {
        const double v = rep.recall[static_cast<std::size_t>(r)];
        if (std::isnan(v))
            j["recall"].push_back(nullptr);
        else
            j["recall"].push_back(v);
    }
    return j.dump(2) + "\n";
}

inline EvalReport report_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("report: invalid JSON: ") + e.what());
    }
    try {
        EvalReport rep;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                rep.confusion.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                    j.at("counts").at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c))
                        .get<std::int64_t>();
        rep.accuracy = j.at("accuracy").get<double>();
        rep.kappa = j.at("kappa").get<double>();
        for (int r = 0; r < 4; ++r) {
            const auto& v = j.at("recall").at(static_cast<std::size_t>(r));
            rep.recall[static_cast<std::size_t>(r)] =
                v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
        }
        return rep;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("report: malformed JSON report: ") + e.what());
    }
}

} // namespace somno
