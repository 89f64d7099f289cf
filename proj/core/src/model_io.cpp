#include "dsmpc/model_io.hpp"

#include "json_util.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dsmpc {
namespace {

using detail::json;
constexpr const char* kModule = "model";

Matrix matrix_or_empty(const json& j, Index cols, const std::string& what) {
    Matrix m = detail::to_matrix(j, kModule, what);
    if (m.rows() == 0) m.resize(0, cols);
    return m;
}

std::vector<bool> nominal_flags(const json& section, Index rows, const std::string& what) {
    std::vector<bool> flags(static_cast<std::size_t>(rows), false);
    if (!section.contains("nominal_rows")) return flags;
    for (const auto& v : section.at("nominal_rows")) {
        if (!v.is_number_integer()) throw Error(ErrorCode::ParseError, kModule, what + ": nominal_rows must be integers");
        const auto r = v.get<long long>();
        if (r < 0 || r >= rows) throw Error(ErrorCode::DimensionMismatch, kModule, what + ": nominal row out of range");
        flags[static_cast<std::size_t>(r)] = true;
    }
    return flags;
}

double probability_for(const json& prob, const char* key, std::size_t i, std::size_t count) {
    const json& v = detail::require(prob, key, kModule);
    if (v.is_number()) return v.get<double>();
    if (v.is_array() && v.size() == count && v[i].is_number()) return v[i].get<double>();
    throw Error(ErrorCode::ParseError, kModule, std::string(key) + " must be a number or one number per subsystem");
}

json polytope_json(const Polytope& p, const std::vector<bool>& nominal) {
    json out;
    out["H"] = detail::from_matrix(p.H);
    out["h"] = detail::from_vector(p.h);
    json rows = json::array();
    for (std::size_t k = 0; k < nominal.size(); ++k) {
        if (nominal[k]) rows.push_back(k);
    }
    out["nominal_rows"] = rows;
    return out;
}

}  // namespace

NetworkModel load_network(const std::string& document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, kModule, e.what());
    }
    try {
        const json& subs = detail::require(doc, "subsystem", kModule);
        const json& graph = detail::require(detail::require(doc, "graph", kModule), "neighbors", kModule);
        const json& weights = detail::require(doc, "weights", kModule);
        const json& prob = detail::require(doc, "probability", kModule);
        const int horizon = detail::require(doc, "horizon", kModule).get<int>();
        if (!subs.is_array() || subs.empty()) throw Error(ErrorCode::ParseError, kModule, "'subsystem' must be a non-empty list");
        const std::size_t count = subs.size();
        if (graph.size() != count || weights.size() != count) {
            throw Error(ErrorCode::DimensionMismatch, kModule, "graph and weights need one entry per subsystem");
        }
        const json* gain = doc.contains("gain") && !doc.at("gain").is_null() ? &doc.at("gain") : nullptr;
        if (gain != nullptr && (!gain->is_array() || gain->size() != count)) {
            throw Error(ErrorCode::DimensionMismatch, kModule, "gain needs one block per subsystem");
        }

        std::vector<SubsystemSpec> specs(count);
        for (std::size_t i = 0; i < count; ++i) {
            const json& s = subs[i];
            const std::string tag = "subsystem " + std::to_string(i);
            SubsystemSpec& spec = specs[i];
            spec.state_dim = detail::require(s, "n", kModule).get<Index>();
            spec.input_dim = detail::require(s, "m", kModule).get<Index>();
            spec.output_dim = detail::require(s, "l", kModule).get<Index>();
            for (const auto& j : graph[i]) spec.neighbors.push_back(j.get<Index>());
            std::sort(spec.neighbors.begin(), spec.neighbors.end());
            spec.neighbors.erase(std::unique(spec.neighbors.begin(), spec.neighbors.end()), spec.neighbors.end());
            if (!std::binary_search(spec.neighbors.begin(), spec.neighbors.end(), static_cast<Index>(i))) {
                spec.neighbors.insert(std::lower_bound(spec.neighbors.begin(), spec.neighbors.end(), static_cast<Index>(i)),
                                      static_cast<Index>(i));
            }
            const json& a = detail::require(s, "A", kModule);
            const json empty_map = json::object();
            const json& c = s.contains("C") ? s.at("C") : empty_map;
            if (!a.is_object() || !c.is_object()) {
                throw Error(ErrorCode::ParseError, kModule, tag + ": A and C map neighbour index to a block");
            }
            for (const auto& [key, _] : a.items()) {
                const Index j = std::stol(key);
                if (!std::binary_search(spec.neighbors.begin(), spec.neighbors.end(), j)) {
                    throw Error(ErrorCode::DimensionMismatch, kModule, tag + ": A block for non-neighbour " + key);
                }
            }
            for (const auto& [key, _] : c.items()) {
                const Index j = std::stol(key);
                if (!std::binary_search(spec.neighbors.begin(), spec.neighbors.end(), j)) {
                    throw Error(ErrorCode::DimensionMismatch, kModule, tag + ": C block for non-neighbour " + key);
                }
            }
            for (Index j : spec.neighbors) {
                if (j < 0 || static_cast<std::size_t>(j) >= count) {
                    throw Error(ErrorCode::DimensionMismatch, kModule, tag + ": neighbour index out of range");
                }
                const Index nj = subs[static_cast<std::size_t>(j)].at("n").get<Index>();
                const std::string key = std::to_string(j);
                spec.a_blocks.push_back(a.contains(key) ? detail::to_matrix(a.at(key), kModule, tag + " A")
                                                        : Matrix::Zero(spec.state_dim, nj));
                spec.c_blocks.push_back(c.contains(key) ? matrix_or_empty(c.at(key), nj, tag + " C")
                                                        : Matrix::Zero(spec.output_dim, nj));
            }
            spec.b = detail::to_matrix(detail::require(s, "B", kModule), kModule, tag + " B");
            spec.noise_cov = detail::to_matrix(detail::require(s, "noise_cov", kModule), kModule, tag + " noise_cov");

            Index n_nb = 0;
            for (Index j : spec.neighbors) n_nb += subs[static_cast<std::size_t>(j)].at("n").get<Index>();
            const json& xs = detail::require(s, "state_constraints", kModule);
            spec.state_set.H = matrix_or_empty(detail::require(xs, "H", kModule), n_nb, tag + " state H");
            spec.state_set.h = detail::to_vector(detail::require(xs, "h", kModule), kModule, tag + " state h");
            spec.state_nominal = nominal_flags(xs, spec.state_set.rows(), tag + " state constraints");
            const json& us = detail::require(s, "input_constraints", kModule);
            spec.input_set.H = matrix_or_empty(detail::require(us, "H", kModule), spec.input_dim, tag + " input H");
            spec.input_set.h = detail::to_vector(detail::require(us, "h", kModule), kModule, tag + " input h");
            spec.input_nominal = nominal_flags(us, spec.input_set.rows(), tag + " input constraints");

            const json& w = weights[i];
            spec.q = detail::to_matrix(detail::require(w, "Q", kModule), kModule, tag + " Q");
            spec.r = detail::to_matrix(detail::require(w, "R", kModule), kModule, tag + " R");
            spec.t = matrix_or_empty(detail::require(w, "T", kModule), spec.output_dim, tag + " T");
            spec.p_x = probability_for(prob, "p_x", i, count);
            spec.p_u = probability_for(prob, "p_u", i, count);
            if (gain != nullptr) spec.gain = detail::to_matrix((*gain)[i], kModule, tag + " gain");
        }
        const Distribution dist =
            parse_distribution(prob.contains("distribution") ? prob.at("distribution").get<std::string>() : "gaussian");
        return assemble_network(std::move(specs), horizon, dist);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, kModule, e.what());
    } catch (const std::invalid_argument&) {
        throw Error(ErrorCode::ParseError, kModule, "neighbour keys must be integers");
    }
}

NetworkModel load_network_file(const std::filesystem::path& path) { return load_network(read_text_file(path)); }

std::string serialize_network(const NetworkModel& model) {
    json doc;
    doc["horizon"] = model.horizon;
    json subs = json::array(), graph = json::array(), weights = json::array(), px = json::array(),
         pu = json::array(), gain = json::array();
    for (const auto& s : model.subsystems) {
        json j;
        j["n"] = s.state_dim;
        j["m"] = s.input_dim;
        j["l"] = s.output_dim;
        json a = json::object(), c = json::object();
        for (std::size_t k = 0; k < s.neighbors.size(); ++k) {
            a[std::to_string(s.neighbors[k])] = detail::from_matrix(s.a_blocks[k]);
            c[std::to_string(s.neighbors[k])] = detail::from_matrix(s.c_blocks[k]);
        }
        j["A"] = a;
        j["C"] = c;
        j["B"] = detail::from_matrix(s.b);
        j["noise_cov"] = detail::from_matrix(s.noise_cov);
        j["state_constraints"] = polytope_json(s.state_set, s.state_nominal);
        j["input_constraints"] = polytope_json(s.input_set, s.input_nominal);
        subs.push_back(j);
        graph.push_back(s.neighbors);
        weights.push_back({{"Q", detail::from_matrix(s.q)}, {"R", detail::from_matrix(s.r)}, {"T", detail::from_matrix(s.t)}});
        px.push_back(s.p_x);
        pu.push_back(s.p_u);
        if (s.gain) gain.push_back(detail::from_matrix(*s.gain));
    }
    doc["subsystem"] = subs;
    doc["graph"] = {{"neighbors", graph}};
    doc["weights"] = weights;
    doc["probability"] = {{"p_x", px}, {"p_u", pu}, {"distribution", std::string(to_string(model.distribution))}};
    if (!model.gain_from_lqr) doc["gain"] = gain;
    return doc.dump(2);
}

std::string model_hash(const NetworkModel& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : serialize_network(model)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "io", "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "io", "cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "io", "write failed for '" + path.string() + "'");
}

}  // namespace dsmpc
