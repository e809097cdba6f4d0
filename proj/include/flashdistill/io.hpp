#pragma once

#include <string>
#include <vector>

#include "flashdistill/data.hpp"
#include "flashdistill/tensor.hpp"

namespace flashdistill {

// Shortest round-trip decimal text of a double (deterministic across runs).
std::string format_double(double v);

// Write via temp file + rename so readers never see a truncated artifact.
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);
bool file_exists(const std::string& path);
void ensure_parent_dir(const std::string& path);

// RFC-4180 CSV: CRLF line endings, comma separated, header row first.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void row(const std::vector<std::string>& cells);
    const std::string& text() const { return buf_; }
    void write(const std::string& path) const { atomic_write_text(path, buf_); }

private:
    std::string buf_;
    std::size_t width_;
    void emit(const std::vector<std::string>& cells);
};

// samples.csv schema shared by dataset export and sampler output: x,y,label.
std::string samples_to_csv(const Tensor& samples, const std::vector<int>& labels);
Dataset samples_from_csv(const std::string& text);

// 600x600 scatter, data mapped from [-3,3]^2, one circle per point colored
// by class from a fixed 8-color palette.
std::string samples_to_svg(const Tensor& samples, const std::vector<int>& labels);

}  // namespace flashdistill
