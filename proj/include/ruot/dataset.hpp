#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ruot/error.hpp"
#include "ruot/io.hpp"
#include "ruot/rng.hpp"

namespace ruot {

/// Unpaired point clouds observed at increasing snapshot times.
struct SnapshotDataset {
    std::size_t dim = 0;
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> clouds;  // [k]: dim x N_k

    std::size_t num_times() const { return times.size(); }
    Eigen::Index count(std::size_t k) const { return clouds.at(k).cols(); }

    std::vector<Eigen::Index> counts() const {
        std::vector<Eigen::Index> c;
        for (const auto& m : clouds) c.push_back(m.cols());
        return c;
    }

    void validate() const {
        if (dim == 0) throw UsageError("dataset dimension is zero");
        if (times.size() != clouds.size()) throw ShapeError("dataset has mismatched times and clouds");
        for (std::size_t k = 0; k < clouds.size(); ++k) {
            if (static_cast<std::size_t>(clouds[k].rows()) != dim)
                throw ShapeError("snapshot " + std::to_string(k) + " has the wrong dimension");
            if (!clouds[k].allFinite()) throw NumericError("snapshot " + std::to_string(k) + " has non-finite values");
            if (k > 0 && !(times[k] > times[k - 1])) throw UsageError("snapshot times must be increasing");
        }
    }

    bool operator==(const SnapshotDataset& o) const {
        if (dim != o.dim || times != o.times || clouds.size() != o.clouds.size()) return false;
        for (std::size_t k = 0; k < clouds.size(); ++k)
            if (clouds[k].rows() != o.clouds[k].rows() || clouds[k].cols() != o.clouds[k].cols() ||
                clouds[k] != o.clouds[k])
                return false;
        return true;
    }
};

/// Keeps only the listed coordinates, in the given order.
inline SnapshotDataset project(const SnapshotDataset& data, const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw UsageError("projection needs at least one coordinate");
    SnapshotDataset out;
    out.dim = dims.size();
    out.times = data.times;
    for (const auto& c : data.clouds) {
        Eigen::MatrixXd p(static_cast<Eigen::Index>(dims.size()), c.cols());
        for (std::size_t r = 0; r < dims.size(); ++r) {
            if (dims[r] >= data.dim) throw UsageError("projection coordinate " + std::to_string(dims[r]) + " out of range");
            p.row(static_cast<Eigen::Index>(r)) = c.row(static_cast<Eigen::Index>(dims[r]));
        }
        out.clouds.push_back(std::move(p));
    }
    return out;
}

/// n distinct columns drawn uniformly without replacement, in draw order; all columns if n >= cols.
inline Eigen::MatrixXd subsample_columns(const Eigen::MatrixXd& x, Eigen::Index n, Rng& rng) {
    if (n >= x.cols()) return x;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index i = 0; i < x.cols(); ++i) idx[static_cast<std::size_t>(i)] = i;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto si = static_cast<std::size_t>(i);
        std::swap(idx[si], idx[si + rng.index(idx.size() - si)]);
    }
    Eigen::MatrixXd out(x.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) out.col(i) = x.col(idx[static_cast<std::size_t>(i)]);
    return out;
}

namespace detail {

inline void append_double(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    out.append(buf, res.ptr);
}

inline double parse_double(std::string_view field, std::size_t line) {
    double v = 0.0;
    const char* b = field.data();
    const char* e = b + field.size();
    if (b != e && *b == '+') ++b;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e || field.empty())
        throw ParseError("cannot parse '" + std::string(field) + "' as a number", line);
    if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(field) + "'", line);
    return v;
}

inline std::vector<std::string_view> split_commas(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

/// CSV text: header `time,x0,...,x{d-1}`, one row per point, times in ascending snapshot order.
inline std::string dataset_to_csv(const SnapshotDataset& data) {
    data.validate();
    std::string out = "time";
    for (std::size_t j = 0; j < data.dim; ++j) out += ",x" + std::to_string(j);
    out += '\n';
    for (std::size_t k = 0; k < data.num_times(); ++k) {
        const auto& c = data.clouds[k];
        for (Eigen::Index i = 0; i < c.cols(); ++i) {
            detail::append_double(out, data.times[k]);
            for (Eigen::Index j = 0; j < c.rows(); ++j) {
                out += ',';
                detail::append_double(out, c(j, i));
            }
            out += '\n';
        }
    }
    return out;
}

inline SnapshotDataset dataset_from_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_commas(line);
    if (header.size() < 2 || header[0] != "time") throw ParseError("header must start with 'time' and name coordinates", 1);
    for (std::size_t j = 1; j < header.size(); ++j)
        if (header[j] != "x" + std::to_string(j - 1))
            throw ParseError("unexpected column '" + std::string(header[j]) + "'", 1);
    const std::size_t dim = header.size() - 1;

    std::map<double, std::vector<std::vector<double>>> groups;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_commas(line);
        if (fields.size() != dim + 1)
            throw ParseError("expected " + std::to_string(dim + 1) + " fields, found " + std::to_string(fields.size()),
                             lineno);
        double t = detail::parse_double(fields[0], lineno);
        std::vector<double> row(dim);
        for (std::size_t j = 0; j < dim; ++j) row[j] = detail::parse_double(fields[j + 1], lineno);
        groups[t].push_back(std::move(row));
    }
    if (groups.empty()) throw ParseError("no data rows", lineno);

    SnapshotDataset data;
    data.dim = dim;
    for (auto& [t, rows] : groups) {
        Eigen::MatrixXd c(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < dim; ++j) c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = rows[i][j];
        data.times.push_back(t);
        data.clouds.push_back(std::move(c));
    }
    return data;
}

inline SnapshotDataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return dataset_from_csv(in);
}

inline void save_csv(const SnapshotDataset& data, const std::string& path) {
    write_file_atomic(path, dataset_to_csv(data));
}

inline SnapshotDataset dataset_from_csv_text(const std::string& text) {
    std::istringstream in(text);
    return dataset_from_csv(in);
}

}  // namespace ruot
