#include "kglp/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kglp {

namespace {

using nlohmann::json;

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta.json");
}

json parse_json_file(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded())
        throw ValidationError("invalid JSON in " + path.string());
    return j;
}

std::int64_t parse_id(std::string_view field, const std::filesystem::path& path,
                      std::size_t line_no) {
    std::int64_t value = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec == std::errc::result_out_of_range)
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": id overflow");
    if (ec != std::errc{} || ptr != last || value < 0)
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": malformed id '" + std::string(field) + "'");
    return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw RuntimeError("short write to " + path.string());
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    if (bytes % sizeof(float) != 0)
        throw ValidationError(path.string() + ": size is not a multiple of 4 bytes");
    std::vector<float> data(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw ValidationError("short read from " + path.string());
    return data;
}

void write_f32_file(const std::filesystem::path& path, const float* data, std::size_t count) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(float)));
    if (!out) throw RuntimeError("short write to " + path.string());
}

TripleStore load_triples(const std::filesystem::path& path) {
    const std::string content = read_text_file(path);

    std::vector<Triple> triples;
    std::int64_t max_entity = -1;
    std::int64_t max_relation = -1;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        const std::string_view line(content.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;

        const auto fields = split(line, '\t');
        if (fields.size() != 3)
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 3 tab-separated fields");
        Triple t;
        t.head = parse_id(fields[0], path, line_no);
        t.rel = parse_id(fields[1], path, line_no);
        t.tail = parse_id(fields[2], path, line_no);
        max_entity = std::max({max_entity, t.head, t.tail});
        max_relation = std::max(max_relation, t.rel);
        triples.push_back(t);
    }

    std::int64_t num_entities = max_entity + 1;
    std::int64_t num_relations = max_relation + 1;
    const auto meta = sidecar_path(path);
    if (std::filesystem::exists(meta)) {
        const json j = parse_json_file(meta);
        if (!j.contains("num_entities") || !j.contains("num_relations"))
            throw ValidationError(meta.string() + ": missing num_entities/num_relations");
        num_entities = j.at("num_entities").get<std::int64_t>();
        num_relations = j.at("num_relations").get<std::int64_t>();
        if (num_entities <= max_entity)
            throw ValidationError(meta.string() + ": num_entities below max entity id in file");
        if (num_relations <= max_relation)
            throw ValidationError(meta.string() + ": num_relations below max relation id in file");
    }
    return TripleStore(std::move(triples), num_entities, num_relations);
}

void save_triples(const TripleStore& store, const std::filesystem::path& path) {
    std::string out;
    for (const Triple& t : store.triples()) {
        out += std::to_string(t.head);
        out += '\t';
        out += std::to_string(t.rel);
        out += '\t';
        out += std::to_string(t.tail);
        out += '\n';
    }
    write_text_file(path, out);
    json meta{{"num_entities", store.num_entities()}, {"num_relations", store.num_relations()}};
    write_text_file(sidecar_path(path), meta.dump() + "\n");
}

FeatureMatrix load_features(const std::filesystem::path& path) {
    const auto meta_path = sidecar_path(path);
    if (!std::filesystem::exists(meta_path))
        throw ValidationError("missing sidecar " + meta_path.string());
    const json j = parse_json_file(meta_path);
    if (!j.contains("rows") || !j.contains("cols"))
        throw ValidationError(meta_path.string() + ": missing rows/cols");
    const auto rows = j.at("rows").get<std::int64_t>();
    const auto cols = j.at("cols").get<std::int64_t>();
    const std::string dtype = j.value("dtype", "f32le");
    if (dtype != "f32le")
        throw ValidationError(meta_path.string() + ": unsupported dtype '" + dtype + "'");
    if (rows < 0 || cols < 0) throw ValidationError(meta_path.string() + ": negative shape");

    auto data = read_f32_file(path);
    if (static_cast<std::int64_t>(data.size()) != rows * cols)
        throw ValidationError(path.string() + ": size mismatch, sidecar says " +
                              std::to_string(rows) + "x" + std::to_string(cols) + " but file holds " +
                              std::to_string(data.size()) + " values");
    for (float v : data)
        if (!std::isfinite(v)) throw ValidationError(path.string() + ": non-finite value");

    FeatureMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.data = std::move(data);
    return m;
}

void save_features(const FeatureMatrix& m, const std::filesystem::path& path) {
    write_f32_file(path, m.data.data(), m.data.size());
    json meta{{"rows", m.rows}, {"cols", m.cols}, {"dtype", "f32le"}};
    write_text_file(sidecar_path(path), meta.dump() + "\n");
}

CandidateList load_candidates(const std::filesystem::path& path) {
    const std::string content = read_text_file(path);
    CandidateList out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        const std::string_view line(content.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;

        const auto fields = split(line, '\t');
        if (fields.size() != 4)
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 4 tab-separated fields");
        CandidateQuery q;
        q.head = parse_id(fields[0], path, line_no);
        q.rel = parse_id(fields[1], path, line_no);
        for (const auto c : split(fields[2], ','))
            q.candidates.push_back(parse_id(c, path, line_no));
        if (q.candidates.empty())
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": empty candidate list");
        if (fields[3] != "-") {
            const std::int64_t truth = parse_id(fields[3], path, line_no);
            if (truth >= static_cast<std::int64_t>(q.candidates.size()))
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": truth_index out of range");
            q.truth_index = truth;
        }
        out.push_back(std::move(q));
    }
    return out;
}

void save_candidates(const CandidateList& queries, const std::filesystem::path& path) {
    std::string out;
    for (const CandidateQuery& q : queries) {
        out += std::to_string(q.head);
        out += '\t';
        out += std::to_string(q.rel);
        out += '\t';
        for (std::size_t i = 0; i < q.candidates.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(q.candidates[i]);
        }
        out += '\t';
        out += q.truth_index ? std::to_string(*q.truth_index) : std::string("-");
        out += '\n';
    }
    write_text_file(path, out);
}

void validate_candidates(const CandidateList& queries, std::int64_t num_entities,
                         std::int64_t num_relations) {
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        const std::string where = "candidate query " + std::to_string(i);
        if (q.head < 0 || q.head >= num_entities)
            throw ValidationError(where + ": head id out of range");
        if (q.rel < 0 || q.rel >= num_relations)
            throw ValidationError(where + ": relation id out of range");
        for (EntityId c : q.candidates)
            if (c < 0 || c >= num_entities)
                throw ValidationError(where + ": candidate id out of range");
    }
}

}  // namespace kglp
