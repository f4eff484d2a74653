#include "mmfuse/encoders.hpp"

#include "mmfuse/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace mmfuse {

namespace {

constexpr char kFeatureMagic[4] = {'M', 'M', 'F', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                            static_cast<unsigned char>((v >> 8) & 0xff),
                            static_cast<unsigned char>((v >> 16) & 0xff),
                            static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
           (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

float read_f32(std::istream& in) {
    const std::uint32_t bits = read_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace

std::optional<std::size_t> Vocabulary::lookup(const std::string& token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t Vocabulary::add(const std::string& token) {
    const auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const std::size_t idx = tokens_.size();
    index_.emplace(token, idx);
    tokens_.push_back(token);
    return idx;
}

FeatureStore::FeatureStore(std::size_t dim, std::vector<float> data)
    : dim_(dim), data_(std::move(data)) {
    if (dim_ == 0 || data_.size() % dim_ != 0) {
        throw ShapeError("FeatureStore: data size " + std::to_string(data_.size()) +
                         " is not a multiple of dim " + std::to_string(dim_));
    }
}

DenseVector FeatureStore::get(std::size_t record) const {
    if (record >= count()) {
        throw ValidationError("feature record " + std::to_string(record) +
                              " out of range (count " + std::to_string(count()) + ")");
    }
    DenseVector out(dim_);
    const float* src = data_.data() + record * dim_;
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<double>(src[i]);
    return out;
}

void FeatureStore::append(const DenseVector& row) {
    if (dim_ == 0) dim_ = row.dim();
    if (row.dim() != dim_) {
        throw ShapeError("FeatureStore::append: row dim " + std::to_string(row.dim()) +
                         " vs store dim " + std::to_string(dim_));
    }
    for (double v : row.values) data_.push_back(static_cast<float>(v));
}

FeatureStore read_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open feature file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) {
        throw ValidationError("bad magic in feature file: " + path);
    }
    const std::uint32_t count = read_u32(in);
    const std::uint32_t dim = read_u32(in);
    if (!in || dim == 0) throw ValidationError("bad header in feature file: " + path);
    std::vector<float> data(static_cast<std::size_t>(count) * dim);
    for (auto& v : data) v = read_f32(in);
    if (!in) throw ValidationError("truncated feature file: " + path);
    return FeatureStore(dim, std::move(data));
}

void write_feature_file(const std::string& path, const FeatureStore& store) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write feature file: " + path);
    out.write(kFeatureMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(store.count()));
    write_u32(out, static_cast<std::uint32_t>(store.dim()));
    for (std::size_t r = 0; r < store.count(); ++r) {
        const DenseVector row = store.get(r);
        for (double v : row.values) write_f32(out, static_cast<float>(v));
    }
}

std::vector<std::string> default_tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) tokens.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t min_count) {
    if (min_count < 1) throw ConfigError("build_vocabulary: min_count must be >= 1");
    std::map<std::string, std::size_t> counts; // ordered map gives lexicographic ties for free
    for (const auto& doc : corpus) {
        for (const auto& tok : doc) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, count] : counts) {
        if (count >= min_count) kept.emplace_back(tok, count);
    }
    if (kept.empty()) throw ValidationError("build_vocabulary: empty vocabulary");
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary vocab;
    for (const auto& [tok, count] : kept) vocab.add(tok);
    return vocab;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t d,
                               SeededRng& rng) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open embedding file: " + path);

    EmbeddingTable table{DenseMatrix(vocab.size(), d)};
    std::vector<bool> seen(vocab.size(), false);

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        const auto idx = vocab.lookup(token);
        std::vector<double> row;
        row.reserve(d);
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) {
            throw ValidationError("embedding file " + path + ": malformed value on line " +
                                  std::to_string(line_no));
        }
        if (row.size() != d) {
            throw ValidationError("embedding file " + path + ": line " + std::to_string(line_no) +
                                  " has " + std::to_string(row.size()) + " values, expected " +
                                  std::to_string(d));
        }
        if (idx) {
            std::copy(row.begin(), row.end(), table.e.row(*idx));
            seen[*idx] = true;
        }
    }
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (seen[i]) continue;
        for (std::size_t j = 0; j < d; ++j) table.e.at(i, j) = rng.uniform(-0.05, 0.05);
    }
    return table;
}

EmbeddingTable init_embeddings(const Vocabulary& vocab, std::size_t d, SeededRng& rng) {
    EmbeddingTable table{DenseMatrix(vocab.size(), d)};
    for (auto& v : table.e.values) v = rng.uniform(-0.05, 0.05);
    return table;
}

TextEncoding encode_text_detailed(const std::vector<std::string>& tokens,
                                  const EmbeddingTable& table, const Vocabulary& vocab,
                                  Aggregation agg, const DropoutSpec& dropout) {
    const std::size_t d = table.dim();
    TextEncoding enc;
    enc.agg = agg;
    for (const auto& tok : tokens) {
        if (const auto idx = vocab.lookup(tok)) enc.rows.push_back(*idx);
    }
    if (enc.rows.empty()) {
        throw EmptyTextError("encode_text: all tokens out of vocabulary");
    }

    const bool dropping = dropout.train && dropout.p > 0.0;
    if (dropping && dropout.rng == nullptr) {
        throw ConfigError("encode_text: dropout in train mode requires an rng");
    }
    const double keep_scale = dropping ? 1.0 / (1.0 - dropout.p) : 1.0;

    std::vector<DenseVector> looked;
    looked.reserve(enc.rows.size());
    for (std::size_t t = 0; t < enc.rows.size(); ++t) {
        DenseVector e(d);
        const double* src = table.e.row(enc.rows[t]);
        if (dropping) {
            std::vector<double> scale(d);
            for (std::size_t j = 0; j < d; ++j) {
                scale[j] = dropout.rng->uniform(0.0, 1.0) < dropout.p ? 0.0 : keep_scale;
                e[j] = src[j] * scale[j];
            }
            enc.scales.push_back(std::move(scale));
        } else {
            std::copy(src, src + d, e.data());
        }
        looked.push_back(std::move(e));
    }

    if (agg == Aggregation::Avg) {
        enc.vec = DenseVector(d);
        for (const auto& e : looked) axpy(1.0, e, enc.vec);
        const double inv = 1.0 / static_cast<double>(looked.size());
        for (auto& v : enc.vec.values) v *= inv;
    } else {
        enc.vec = looked[0];
        enc.winners.assign(d, 0);
        for (std::size_t t = 1; t < looked.size(); ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                if (looked[t][j] > enc.vec[j]) { // strict: ties keep the earliest token
                    enc.vec[j] = looked[t][j];
                    enc.winners[j] = t;
                }
            }
        }
    }
    return enc;
}

DenseVector encode_text(const std::vector<std::string>& tokens, const EmbeddingTable& table,
                        const Vocabulary& vocab, Aggregation agg, const DropoutSpec& dropout) {
    return encode_text_detailed(tokens, table, vocab, agg, dropout).vec;
}

DenseVector project_image(const DenseVector& feature, const ProjectionParams& proj) {
    return affine(proj.w, feature, proj.b);
}

} // namespace mmfuse
