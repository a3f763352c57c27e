#include "restart/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "restart/errors.hpp"

namespace restart::io {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int Csv::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

void write_csv(const std::string& path, const Csv& csv) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    for (size_t i = 0; i < csv.header.size(); ++i)
        out << (i ? "," : "") << csv.header[i];
    out << "\n";
    for (const auto& row : csv.rows) {
        if (row.size() != csv.header.size())
            throw ConfigError("csv row width does not match the header");
        for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

Csv read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    Csv csv;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.push_back("");
        if (first) {
            csv.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != csv.header.size())
                throw ConfigError("'" + path + "' has ragged rows");
            csv.rows.push_back(std::move(fields));
        }
    }
    if (first) throw ConfigError("'" + path + "' is empty");
    return csv;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
    Csv csv;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        csv.header.push_back("x_" + std::to_string(j));
    csv.rows.reserve(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> row;
        row.reserve(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
        csv.rows.push_back(std::move(row));
    }
    write_csv(path, csv);
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
    Csv csv = read_csv(path);
    Eigen::MatrixXd m(csv.rows.size(), csv.header.size());
    for (size_t i = 0; i < csv.rows.size(); ++i)
        for (size_t j = 0; j < csv.header.size(); ++j) {
            // strtod instead of stod: stod rejects subnormals as out of range
            const std::string& field = csv.rows[i][j];
            char* end = nullptr;
            double v = std::strtod(field.c_str(), &end);
            if (end == field.c_str() || *end != '\0')
                throw ConfigError("'" + path + "' has a non-numeric entry at row " +
                                  std::to_string(i));
            m(i, j) = v;
        }
    return m;
}

const std::vector<std::string> kSweepHeader = {
    "sampler", "solver_main", "solver_restart", "nfe", "n_main", "n_restart",
    "k_iters", "t_min", "t_max", "noise_mult", "s_churn", "seed_group",
    "n_samples", "total_w1", "contracted_w1", "additional_w1", "wall_ms"};

std::vector<std::string> sweep_record_row(const SweepRecord& record, bool with_timings) {
    const SamplerSpec& spec = record.cell.spec;
    int n_main = 0, n_restart = 0, k_iters = 0;
    double t_min = 0.0, t_max = 0.0, noise_mult = 0.0, s_churn = 0.0;
    std::string solver_restart;
    if (spec.kind == SamplerKind::restart) {
        const RestartConfig& c = spec.restart;
        n_main = c.final_zero ? c.n_main : c.n_main - 1;  // steps in the main process
        if (!c.levels.empty()) {
            n_restart = c.levels.front().n_restart_steps;
            k_iters = c.levels.front().k_iterations;
            t_min = c.levels.front().t_min;
            t_max = c.levels.front().t_max;
        } else {
            t_min = c.main_t_min;
            t_max = c.main_t_max;
        }
        solver_restart = to_string(spec.solver_restart);
        if (spec.churn_in_restart) s_churn = spec.churn.s_churn;
    } else {
        n_main = spec.n_steps;
        t_min = spec.t_min;
        t_max = spec.t_max;
        if (spec.kind == SamplerKind::sde) noise_mult = spec.noise_mult;
        if (spec.kind == SamplerKind::improved_sde) s_churn = spec.churn.s_churn;
    }
    return {
        to_string(spec.kind),
        to_string(spec.solver_main),
        solver_restart,
        std::to_string(record.nfe),
        std::to_string(n_main),
        std::to_string(n_restart),
        std::to_string(k_iters),
        format_double(t_min),
        format_double(t_max),
        format_double(noise_mult),
        format_double(s_churn),
        std::to_string(record.seed_group),
        std::to_string(record.n_samples),
        format_double(record.total_w1),
        format_double(record.contracted_w1),
        format_double(record.additional_w1),
        with_timings ? format_double(record.wall_ms) : "0",
    };
}

Csv sweep_records_csv(const std::vector<SweepRecord>& records, bool with_timings) {
    Csv csv;
    csv.header = kSweepHeader;
    csv.rows.reserve(records.size());
    for (const auto& record : records)
        csv.rows.push_back(sweep_record_row(record, with_timings));
    return csv;
}

void write_metadata(const std::string& data_path, const nlohmann::json& meta) {
    std::string path = data_path + ".meta.json";
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << meta.dump(2) << "\n";
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

nlohmann::json read_metadata(const std::string& meta_path) {
    std::ifstream in(meta_path);
    if (!in) throw ConfigError("cannot open '" + meta_path + "'");
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const std::exception& e) {
        throw ConfigError("'" + meta_path + "' is not valid metadata: " + e.what());
    }
    return meta;
}

namespace {

struct Axis {
    double lo, hi;
    double to_px(double v, double px_lo, double px_hi) const {
        double u = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        return px_lo + u * (px_hi - px_lo);
    }
};

Axis fit_axis(const std::vector<double>& vs) {
    double lo = vs.empty() ? 0.0 : vs[0];
    double hi = lo;
    for (double v : vs) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double pad = (hi - lo) * 0.06;
    if (pad == 0.0) pad = std::abs(hi) * 0.1 + 1.0;
    return {lo - pad, hi + pad};
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

} // namespace

void write_pareto_svg(const std::string& path, const std::vector<double>& xs,
                      const std::vector<double>& ys, const std::vector<int>& frontier,
                      const std::string& x_label, const std::string& y_label) {
    if (xs.size() != ys.size()) throw ConfigError("svg plot needs equal key lengths");
    const double width = 640, height = 480;
    const double left = 70, right = width - 20, top = 20, bottom = height - 50;

    std::vector<double> fx, fy;
    for (size_t i = 0; i < xs.size(); ++i)
        if (std::isfinite(xs[i]) && std::isfinite(ys[i])) {
            fx.push_back(xs[i]);
            fy.push_back(ys[i]);
        }
    Axis ax = fit_axis(fx), ay = fit_axis(fy);

    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
        << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
        << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
        << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";

    for (int k = 0; k <= 4; ++k) {
        double u = k / 4.0;
        double xv = ax.lo + u * (ax.hi - ax.lo);
        double yv = ay.lo + u * (ay.hi - ay.lo);
        double px = ax.to_px(xv, left, right);
        double py = ay.to_px(yv, bottom, top);
        out << "<line x1=\"" << px << "\" y1=\"" << bottom << "\" x2=\"" << px
            << "\" y2=\"" << bottom + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << px << "\" y=\"" << bottom + 20
            << "\" font-size=\"11\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n";
        out << "<line x1=\"" << left - 5 << "\" y1=\"" << py << "\" x2=\"" << left
            << "\" y2=\"" << py << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << left - 8 << "\" y=\"" << py + 4
            << "\" font-size=\"11\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
    }
    out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << height - 12
        << "\" font-size=\"13\" text-anchor=\"middle\">" << x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << (top + bottom) / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << (top + bottom) / 2 << ")\">" << y_label << "</text>\n";

    for (size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
        out << "<circle cx=\"" << ax.to_px(xs[i], left, right) << "\" cy=\""
            << ay.to_px(ys[i], bottom, top) << "\" r=\"3\" fill=\"#808080\"/>\n";
    }
    if (!frontier.empty()) {
        out << "<polyline fill=\"none\" stroke=\"#c2402a\" stroke-width=\"1.5\" points=\"";
        for (int idx : frontier)
            out << ax.to_px(xs[idx], left, right) << "," << ay.to_px(ys[idx], bottom, top)
                << " ";
        out << "\"/>\n";
        for (int idx : frontier)
            out << "<circle cx=\"" << ax.to_px(xs[idx], left, right) << "\" cy=\""
                << ay.to_px(ys[idx], bottom, top) << "\" r=\"4\" fill=\"#c2402a\"/>\n";
    }
    out << "</svg>\n";
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

} // namespace restart::io
