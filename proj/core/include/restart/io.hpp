#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "restart/experiments.hpp"

namespace restart::io {

// Shortest representation that round-trips a double exactly.
std::string format_double(double v);

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
};

void write_csv(const std::string& path, const Csv& csv);
Csv read_csv(const std::string& path);

// Point clouds with header x_0..x_{d-1}, one row per point.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

// Fixed experiment schema shared by decompose and sweep outputs.
extern const std::vector<std::string> kSweepHeader;

// wall_ms is written as 0 unless with_timings is set, keeping default output
// byte-reproducible; measured timings always go to the metadata sidecar.
Csv sweep_records_csv(const std::vector<SweepRecord>& records, bool with_timings);

std::vector<std::string> sweep_record_row(const SweepRecord& record, bool with_timings);

// Sidecar written next to a data file as <path>.meta.json.
void write_metadata(const std::string& data_path, const nlohmann::json& meta);
nlohmann::json read_metadata(const std::string& meta_path);

// Scatter plot of all records with the frontier polyline highlighted.
void write_pareto_svg(const std::string& path, const std::vector<double>& xs,
                      const std::vector<double>& ys, const std::vector<int>& frontier,
                      const std::string& x_label, const std::string& y_label);

} // namespace restart::io
