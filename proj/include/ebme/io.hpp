// Artifact persistence: locale-free CSV, the binary matrix container, and
// JSON serialization of statistics and reports. Doubles are written with the
// shortest round-tripping representation so identical runs produce identical
// bytes.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebme/linalg.hpp"

namespace ebme {

inline constexpr int kSchemaVersion = 1;

std::string format_double(double v);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    void begin_row();
    void field(double v);
    void field(long v);
    void field(const std::string& v);
    void end_row();

private:
    std::ofstream out_;
    bool first_in_row_ = true;
    void sep();
};

// Binary container: magic "EBMX", u32 version, u32 element type (1 =
// complex128), u64 rows, u64 cols, then row-major little-endian payload.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

// Throws when the stored schema version is newer than this build understands.
void check_schema_version(const nlohmann::json& j, const std::string& what);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json real_vector_to_json(const RealVector& v);
RealVector real_vector_from_json(const nlohmann::json& j);

}  // namespace ebme
