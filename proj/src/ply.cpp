#include "pcnst/error.hpp"
#include "pcnst/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace pcnst {

namespace fs = std::filesystem;

namespace {

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
    bool has_list = false;
};

[[noreturn]] void fail(std::size_t line, const std::string& message) {
    throw ParseError("ply:" + std::to_string(line) + ": " + message);
}

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string token;
    while (ss >> token) {
        tokens.push_back(token);
    }
    return tokens;
}

bool is_scalar_type(const std::string& type) {
    static const std::array<const char*, 16> kTypes{
        "char",  "uchar",  "short",  "ushort", "int",    "uint",    "float",   "double",
        "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64"};
    for (const char* t : kTypes) {
        if (type == t) {
            return true;
        }
    }
    return false;
}

int quantize(double v) {
    return static_cast<int>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

void write_file_atomically(const fs::path& path, const std::function<void(std::ostream&)>& write,
                           bool binary) {
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    try {
        {
            std::ofstream out(tmp, binary ? std::ios::binary : std::ios::openmode{});
            if (!out) {
                throw IoError("cannot open " + tmp.string() + " for writing");
            }
            write(out);
            out.flush();
            if (!out) {
                throw IoError("failed writing " + tmp.string());
            }
        }
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw;
    }
}

ColoredPointCloud parse_ply(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) {
            return false;
        }
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        return true;
    };

    if (!next_line() || line != "ply") {
        fail(1, "missing 'ply' magic line");
    }
    std::vector<PlyElement> elements;
    bool header_done = false;
    bool saw_format = false;
    while (next_line()) {
        const auto tokens = tokenize(line);
        if (tokens.empty()) {
            continue;
        }
        const std::string& key = tokens[0];
        if (key == "format") {
            if (tokens.size() != 3) {
                fail(line_no, "malformed format line");
            }
            if (tokens[1] != "ascii") {
                fail(line_no, "unsupported format '" + tokens[1] + "' (only ascii is supported)");
            }
            saw_format = true;
        } else if (key == "comment" || key == "obj_info") {
            continue;
        } else if (key == "element") {
            if (tokens.size() != 3) {
                fail(line_no, "malformed element line");
            }
            PlyElement element;
            element.name = tokens[1];
            try {
                std::size_t used = 0;
                const long long count = std::stoll(tokens[2], &used);
                if (used != tokens[2].size() || count < 0) {
                    throw std::invalid_argument("count");
                }
                element.count = static_cast<std::size_t>(count);
            } catch (const std::exception&) {
                fail(line_no, "invalid element count '" + tokens[2] + "'");
            }
            elements.push_back(element);
        } else if (key == "property") {
            if (elements.empty()) {
                fail(line_no, "property before any element");
            }
            if (tokens.size() == 5 && tokens[1] == "list") {
                elements.back().has_list = true;
                elements.back().properties.push_back(tokens[4]);
            } else if (tokens.size() == 3 && is_scalar_type(tokens[1])) {
                elements.back().properties.push_back(tokens[2]);
            } else {
                fail(line_no, "malformed property line");
            }
        } else if (key == "end_header") {
            header_done = true;
            break;
        } else {
            fail(line_no, "unexpected header keyword '" + key + "'");
        }
    }
    if (!header_done) {
        fail(line_no, "header is missing 'end_header'");
    }
    if (!saw_format) {
        fail(line_no, "header is missing the format line");
    }

    const PlyElement* vertex = nullptr;
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            vertex = &e;
        }
    }
    if (vertex == nullptr) {
        fail(line_no, "no vertex element");
    }
    if (vertex->has_list) {
        fail(line_no, "vertex element with list properties is not supported");
    }
    std::array<int, 6> column{-1, -1, -1, -1, -1, -1};
    const std::array<const char*, 6> names{"x", "y", "z", "red", "green", "blue"};
    for (std::size_t p = 0; p < vertex->properties.size(); ++p) {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (vertex->properties[p] == names[k]) {
                column[k] = static_cast<int>(p);
            }
        }
    }
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (column[k] < 0) {
            fail(line_no, std::string("vertex property '") + names[k] + "' is missing");
        }
    }
    if (vertex->count == 0) {
        fail(line_no, "vertex element has no points");
    }

    Matrix positions(static_cast<Eigen::Index>(vertex->count), 3);
    Matrix colors(static_cast<Eigen::Index>(vertex->count), 3);
    for (const auto& element : elements) {
        for (std::size_t i = 0; i < element.count; ++i) {
            if (!next_line()) {
                fail(line_no, "expected " + std::to_string(element.count) + " " + element.name +
                                  " entries, file ended after " + std::to_string(i));
            }
            if (&element != vertex) {
                continue;
            }
            const auto tokens = tokenize(line);
            if (tokens.size() != vertex->properties.size()) {
                fail(line_no, "expected " + std::to_string(vertex->properties.size()) +
                                  " values, found " + std::to_string(tokens.size()));
            }
            for (std::size_t k = 0; k < 6; ++k) {
                double v = 0.0;
                try {
                    std::size_t used = 0;
                    v = std::stod(tokens[static_cast<std::size_t>(column[k])], &used);
                    if (used != tokens[static_cast<std::size_t>(column[k])].size()) {
                        throw std::invalid_argument("trailing");
                    }
                } catch (const std::exception&) {
                    fail(line_no, "invalid number '" + tokens[static_cast<std::size_t>(column[k])] +
                                      "'");
                }
                if (!std::isfinite(v)) {
                    fail(line_no, "non-finite value");
                }
                const auto row = static_cast<Eigen::Index>(i);
                if (k < 3) {
                    positions(row, static_cast<Eigen::Index>(k)) = v;
                } else {
                    colors(row, static_cast<Eigen::Index>(k - 3)) = v;
                }
            }
        }
    }
    return ColoredPointCloud(std::move(positions), std::move(colors));
}

ColoredPointCloud load_ply(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return parse_ply(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_ply(const ColoredPointCloud& cloud, std::ostream& out) {
    const ColoredPointCloud raw = cloud.normalized() ? denormalize(cloud) : cloud;
    double color_scale = 1.0;
    if (cloud.normalized()) {
        color_scale = 255.0 / cloud.transform()->color_range;
    } else if (raw.colors().maxCoeff() <= 1.0) {
        color_scale = 255.0;
    }
    out << "ply\nformat ascii 1.0\nelement vertex " << raw.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    char buf[160];
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const auto p = raw.positions().row(i);
        const auto c = raw.colors().row(i);
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d\n", p(0), p(1), p(2),
                      quantize(c(0) * color_scale), quantize(c(1) * color_scale),
                      quantize(c(2) * color_scale));
        out << buf;
    }
}

void save_ply(const ColoredPointCloud& cloud, const fs::path& path) {
    write_file_atomically(path, [&](std::ostream& out) { write_ply(cloud, out); });
}

bool looks_like_ply(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    in.read(magic, 4);
    return in.gcount() == 4 && magic[0] == 'p' && magic[1] == 'l' && magic[2] == 'y' &&
           (magic[3] == '\n' || magic[3] == '\r');
}

}  // namespace pcnst
