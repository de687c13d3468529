#include "ebme/io.hpp"

#include <charconv>
#include <cstring>
#include <stdexcept>

namespace ebme {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    bool first = true;
    for (const auto& h : header) {
        if (!first) out_ << ',';
        out_ << h;
        first = false;
    }
    out_ << '\n';
}

void CsvWriter::sep() {
    if (!first_in_row_) out_ << ',';
    first_in_row_ = false;
}

void CsvWriter::begin_row() { first_in_row_ = true; }
void CsvWriter::field(double v) {
    sep();
    out_ << format_double(v);
}
void CsvWriter::field(long v) {
    sep();
    out_ << v;
}
void CsvWriter::field(const std::string& v) {
    sep();
    out_ << v;
}
void CsvWriter::end_row() { out_ << '\n'; }

namespace {
constexpr char kMagic[4] = {'E', 'B', 'M', 'X'};
constexpr std::uint32_t kContainerVersion = 1;
constexpr std::uint32_t kComplex128 = 1;
}  // namespace

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    const std::uint32_t version = kContainerVersion;
    const std::uint32_t dtype = kComplex128;
    const std::uint64_t rows = m.rows(), cols = m.cols();
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&dtype), 4);
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&cols), 8);
    // row-major payload
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double re = m(i, j).real(), im = m(i, j).imag();
            out.write(reinterpret_cast<const char*>(&re), 8);
            out.write(reinterpret_cast<const char*>(&im), 8);
        }
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    std::uint32_t version = 0, dtype = 0;
    std::uint64_t rows = 0, cols = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&dtype), 4);
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error(path.string() + " is not a matrix container");
    }
    if (version > kContainerVersion) {
        throw std::runtime_error(path.string() + ": container version " +
                                 std::to_string(version) + " is newer than supported");
    }
    if (dtype != kComplex128) {
        throw std::runtime_error(path.string() + ": unsupported element type");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t i = 0; i < rows; ++i) {
        for (std::uint64_t j = 0; j < cols; ++j) {
            double re = 0.0, im = 0.0;
            in.read(reinterpret_cast<char*>(&re), 8);
            in.read(reinterpret_cast<char*>(&im), 8);
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = Complex(re, im);
        }
    }
    if (!in) throw std::runtime_error("truncated matrix container: " + path.string());
    return m;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return j;
}

void check_schema_version(const nlohmann::json& j, const std::string& what) {
    const int version = j.value("schema_version", 0);
    if (version > kSchemaVersion) {
        throw std::runtime_error(what + ": schema version " + std::to_string(version) +
                                 " is newer than supported version " +
                                 std::to_string(kSchemaVersion));
    }
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            data.push_back(m(i, k).real());
            data.push_back(m(i, k).imag());
        }
    }
    j["data"] = std::move(data);
    return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != 2 * rows * cols) {
        throw std::runtime_error("matrix JSON payload has the wrong length");
    }
    Matrix m(rows, cols);
    std::size_t p = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index k = 0; k < cols; ++k) {
            const double re = data[p++].get<double>();
            const double im = data[p++].get<double>();
            m(i, k) = Complex(re, im);
        }
    }
    return m;
}

nlohmann::json real_vector_to_json(const RealVector& v) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

RealVector real_vector_from_json(const nlohmann::json& j) {
    RealVector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

}  // namespace ebme
