#include "iontrap/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "iontrap/error.hpp"

namespace iontrap::io {

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8e", x);
    return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& columns) {
    if (header.size() != columns.size()) throw DomainError("csv: header and column count differ");
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns)
        if (c.size() != rows) throw DomainError("csv: columns differ in length");
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
    out += '\n';
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (j) out += ',';
            out += format_double(columns[j][i]);
        }
        out += '\n';
    }
    return out;
}

std::string trajectory_csv(const Trajectory& traj) {
    std::vector<std::string> header{"t"};
    std::vector<std::vector<double>> cols{traj.times};
    for (std::size_t i = 0; i < traj.ions(); ++i) {
        header.push_back("z" + std::to_string(i + 1));
        header.push_back("v" + std::to_string(i + 1));
        cols.push_back(traj.positions[i]);
        cols.push_back(traj.velocities[i]);
    }
    return csv_text(header, cols);
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    CsvTable table;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto fields = split(t);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size())
            throw ParseError(source + ": row " + std::to_string(lineno) + ": expected " +
                             std::to_string(table.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        std::vector<double> row;
        for (const auto& f : fields) {
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size())
                throw ParseError(source + ": row " + std::to_string(lineno) + ": '" + f +
                                 "' is not a number");
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw UsageError(source + ": file is empty");
    if (table.rows.empty()) throw UsageError(source + ": no data rows");
    return table;
}

AxialProfile profile_from_csv(const CsvTable& table) {
    if (table.header.size() < 2 || table.header[0] != "z_m")
        throw ParseError("profile csv: first column must be z_m, followed by counts");
    AxialProfile p;
    for (const auto& r : table.rows) {
        p.bin_centers.push_back(r[0]);
        p.counts.push_back(r[1]);
        if (table.header.size() >= 3) p.uncertainties.push_back(r[2]);
    }
    if (p.uncertainties.empty()) p = AxialProfile::from_counts(p.bin_centers, p.counts);
    p.validate();
    return p;
}

std::string pgm_bytes(const Image& image) {
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n65535\n";
    out.reserve(out.size() + 2 * image.pixels.size());
    for (std::uint32_t v : image.pixels) {
        const auto s = static_cast<std::uint16_t>(std::min<std::uint32_t>(v, 65535u));
        out += static_cast<char>(s >> 8);
        out += static_cast<char>(s & 0xff);
    }
    return out;
}

std::string image_csv(const Image& image) {
    std::string out;
    for (std::size_t r = 0; r < image.height; ++r) {
        for (std::size_t c = 0; c < image.width; ++c) {
            if (c) out += ',';
            out += std::to_string(image.at(r, c));
        }
        out += '\n';
    }
    return out;
}

Image parse_pgm(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || !in || maxval != 65535) throw ParseError("pgm: expected a 16-bit P5 image");
    in.get();
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (bytes.size() < offset + 2 * w * h) throw ParseError("pgm: truncated pixel data");
    Image img{w, h, std::vector<std::uint32_t>(w * h)};
    for (std::size_t i = 0; i < w * h; ++i) {
        const auto hi = static_cast<unsigned char>(bytes[offset + 2 * i]);
        const auto lo = static_cast<unsigned char>(bytes[offset + 2 * i + 1]);
        img.pixels[i] = (static_cast<std::uint32_t>(hi) << 8) | lo;
    }
    return img;
}

nlohmann::ordered_json fit_to_json(const FitResult& fit) {
    nlohmann::ordered_json j;
    j["model"] = fit.model;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    nlohmann::ordered_json errs = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < fit.names.size(); ++i) {
        params[fit.names[i]] = fit.params[i];
        errs[fit.names[i]] = fit.uncertainties[i];
    }
    j["params"] = params;
    j["uncertainties"] = errs;
    if (!fit.derived_names.empty()) {
        nlohmann::ordered_json d = nlohmann::ordered_json::object();
        nlohmann::ordered_json de = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < fit.derived_names.size(); ++i) {
            d[fit.derived_names[i]] = fit.derived[i];
            de[fit.derived_names[i]] = fit.derived_uncertainties[i];
        }
        j["derived"] = d;
        j["derived_uncertainties"] = de;
    }
    j["chi2"] = fit.chi2;
    j["chi2_per_dof"] = fit.chi2_per_dof;
    j["dof"] = fit.dof;
    if (fit.model == "line") j["r_squared"] = fit.r_squared;
    j["converged"] = fit.converged;
    j["n_iterations"] = fit.n_iterations;
    j["residuals"] = fit.residuals;
    return j;
}

}  // namespace iontrap::io
