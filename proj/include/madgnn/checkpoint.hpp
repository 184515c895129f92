#pragma once

// Plain-text parameter container.
//
//   madgnn-checkpoint 1
//   meta <free text to end of line>
//   param <name> <rows> <cols>
//   <rows*cols shortest round-trip doubles, one row per line>
//   ...
//   end
//
// Values are printed with std::to_chars, which round-trips exactly.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>

#include "madgnn/autodiff.hpp"

namespace madgnn {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw CheckpointError("format_double: to_chars failed");
    return {buf, end};
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) {
        throw CheckpointError("parse_double: bad number '" + s + "'");
    }
    return v;
}

inline void write_checkpoint(std::ostream& os, const ParameterList& params, const std::string& meta) {
    os << "madgnn-checkpoint " << kCheckpointVersion << '\n';
    os << "meta " << meta << '\n';
    for (const Parameter* p : params) {
        const Matrix& m = p->value();
        os << "param " << p->name() << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? " " : "") << format_double(m(i, j));
            os << '\n';
        }
    }
    os << "end\n";
}

inline void save_checkpoint(const std::string& path, const ParameterList& params, const std::string& meta) {
    std::ofstream os(path);
    if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
    write_checkpoint(os, params, meta);
    if (!os) throw CheckpointError("write to '" + path + "' failed");
}

struct CheckpointContents {
    std::string meta;
    std::map<std::string, Matrix> values;
};

inline CheckpointContents read_checkpoint(std::istream& is) {
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "madgnn-checkpoint") throw CheckpointError("not a checkpoint");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    CheckpointContents out;
    if (!(is >> tag) || tag != "meta") throw CheckpointError("missing meta line");
    std::getline(is, out.meta);
    if (!out.meta.empty() && out.meta.front() == ' ') out.meta.erase(0, 1);
    while (is >> tag) {
        if (tag == "end") return out;
        if (tag != "param") throw CheckpointError("unexpected token '" + tag + "'");
        std::string name;
        std::size_t r = 0, c = 0;
        if (!(is >> name >> r >> c)) throw CheckpointError("bad param header");
        std::vector<double> data(r * c);
        for (auto& v : data) {
            std::string tok;
            if (!(is >> tok)) throw CheckpointError("truncated values for '" + name + "'");
            v = parse_double(tok);
        }
        if (!out.values.emplace(name, Matrix(r, c, std::move(data))).second) {
            throw CheckpointError("duplicate parameter '" + name + "'");
        }
    }
    throw CheckpointError("missing end marker");
}

// Loads every parameter in `params` by name. Extra entries in the file are an
// error, as are missing ones and shape mismatches. Returns the meta line.
inline std::string load_checkpoint(const std::string& path, const ParameterList& params) {
    std::ifstream is(path);
    if (!is) throw CheckpointError("cannot open '" + path + "'");
    CheckpointContents c = read_checkpoint(is);
    if (c.values.size() != params.size()) {
        throw CheckpointError("checkpoint has " + std::to_string(c.values.size()) +
                              " parameters, model expects " + std::to_string(params.size()));
    }
    for (Parameter* p : params) {
        auto it = c.values.find(p->name());
        if (it == c.values.end()) throw CheckpointError("checkpoint lacks '" + p->name() + "'");
        if (it->second.rows() != p->value().rows() || it->second.cols() != p->value().cols()) {
            throw CheckpointError("shape mismatch for '" + p->name() + "': file " +
                                  it->second.shape_string() + ", model " + p->value().shape_string());
        }
        p->assign(it->second);
    }
    return c.meta;
}

}  // namespace madgnn
