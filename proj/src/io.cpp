#include "flashdistill/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flashdistill/error.hpp"

namespace flashdistill {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void ensure_parent_dir(const std::string& path) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void atomic_write_text(const std::string& path, const std::string& content) {
    ensure_parent_dir(path);
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp + " for writing");
        out.write(content.data(), std::streamsize(content.size()));
        if (!out) throw Error("write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool file_exists(const std::string& path) { return fs::exists(path); }

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) { emit(header); }

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_)
        throw Error("csv: row has " + std::to_string(cells.size()) + " cells, header has " +
                    std::to_string(width_));
    emit(cells);
}

void CsvWriter::emit(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buf_ += ',';
        const std::string& c = cells[i];
        bool quote = c.find_first_of(",\"\r\n") != std::string::npos;
        if (quote) {
            buf_ += '"';
            for (char ch : c) {
                if (ch == '"') buf_ += '"';
                buf_ += ch;
            }
            buf_ += '"';
        } else {
            buf_ += c;
        }
    }
    buf_ += "\r\n";
}

std::string samples_to_csv(const Tensor& samples, const std::vector<int>& labels) {
    if (samples.rows() != labels.size()) throw Error("samples_to_csv: label count mismatch");
    CsvWriter csv({"x", "y", "label"});
    for (std::size_t i = 0; i < samples.rows(); ++i)
        csv.row({format_double(samples.data[2 * i]), format_double(samples.data[2 * i + 1]),
                 std::to_string(labels[i])});
    return csv.text();
}

Dataset samples_from_csv(const std::string& text) {
    Dataset ds;
    std::vector<double> xs;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {  // header
            first = false;
            continue;
        }
        std::istringstream row(line);
        std::string cell;
        double x = 0, y = 0;
        int label = 0, col = 0;
        while (std::getline(row, cell, ',')) {
            if (col == 0) x = std::stod(cell);
            else if (col == 1) y = std::stod(cell);
            else if (col == 2) label = std::stoi(cell);
            ++col;
        }
        if (col < 3) throw Error("samples csv: short row '" + line + "'");
        xs.push_back(x);
        xs.push_back(y);
        ds.labels.push_back(label);
    }
    ds.samples = Tensor({ds.labels.size(), 2}, std::move(xs));
    return ds;
}

std::string samples_to_svg(const Tensor& samples, const std::vector<int>& labels) {
    if (samples.rows() != labels.size()) throw Error("samples_to_svg: label count mismatch");
    static const char* palette[8] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 600 600\" width=\"600\" "
           "height=\"600\">\n";
    out += "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
    char buf[160];
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        double px = (samples.data[2 * i] + 3.0) / 6.0 * 600.0;
        double py = 600.0 - (samples.data[2 * i + 1] + 3.0) / 6.0 * 600.0;
        const char* color = palette[std::size_t(labels[i] < 0 ? 0 : labels[i]) % 8];
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                      px, py, color);
        out += buf;
    }
    out += "</svg>\n";
    return out;
}

}  // namespace flashdistill
