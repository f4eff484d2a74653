#include "mmfuse/checkpoint.hpp"

#include "mmfuse/errors.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <vector>

namespace mmfuse {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const std::uint32_t len = get_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    return s;
}

struct NamedTensor {
    std::string name;
    std::uint32_t rows;
    std::uint32_t cols;
    const std::vector<double>* values;
};

void collect_tensors(const std::string& prefix, const ModelParams& params,
                     std::vector<NamedTensor>& out) {
    auto mat = [&](const std::string& name, const DenseMatrix& m) {
        if (!m.values.empty()) {
            out.push_back({prefix + name, static_cast<std::uint32_t>(m.rows),
                           static_cast<std::uint32_t>(m.cols), &m.values});
        }
    };
    auto vec = [&](const std::string& name, const DenseVector& v) {
        if (!v.values.empty()) {
            out.push_back({prefix + name, 1, static_cast<std::uint32_t>(v.dim()), &v.values});
        }
    };
    mat("embeddings", params.embeddings.e);
    mat("proj_w", params.proj.w);
    vec("proj_b", params.proj.b);
    mat("hidden_w", params.hidden_w);
    vec("hidden_b", params.hidden_b);
    mat("head_w", params.head_w);
    vec("head_b", params.head_b);
}

void assign_tensor(ModelParams& params, const std::string& name, std::uint32_t rows,
                   std::uint32_t cols, std::vector<double> values) {
    auto as_matrix = [&](DenseMatrix& m) {
        m.rows = rows;
        m.cols = cols;
        m.values = std::move(values);
    };
    auto as_vector = [&](DenseVector& v) { v.values = std::move(values); };
    if (name == "embeddings") {
        as_matrix(params.embeddings.e);
    } else if (name == "proj_w") {
        as_matrix(params.proj.w);
    } else if (name == "proj_b") {
        as_vector(params.proj.b);
    } else if (name == "hidden_w") {
        as_matrix(params.hidden_w);
    } else if (name == "hidden_b") {
        as_vector(params.hidden_b);
    } else if (name == "head_w") {
        as_matrix(params.head_w);
    } else if (name == "head_b") {
        as_vector(params.head_b);
    } else {
        throw ValidationError("checkpoint: unknown tensor name: " + name);
    }
}

} // namespace

void save_model(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    put_u32(out, kVersion);

    put_string(out, to_string(model.config.mode));
    put_string(out, to_string(model.config.pooling));
    put_string(out, to_string(model.config.aggregation));
    put_u32(out, static_cast<std::uint32_t>(model.config.d));
    put_u32(out, static_cast<std::uint32_t>(model.config.h));
    put_u32(out, static_cast<std::uint32_t>(model.config.g));
    put_u32(out, static_cast<std::uint32_t>(model.config.image_dim));
    put_u32(out, static_cast<std::uint32_t>(model.config.class_count));
    put_f64(out, model.config.lambda);
    put_f64(out, model.config.dropout_p);
    put_f64(out, model.config.learning_rate);
    put_u32(out, model.config.freeze_embeddings ? 1 : 0);

    put_u32(out, static_cast<std::uint32_t>(model.classes.size()));
    for (const auto& c : model.classes) put_string(out, c);
    put_u32(out, static_cast<std::uint32_t>(model.vocab.size()));
    for (const auto& t : model.vocab.tokens()) put_string(out, t);

    std::vector<NamedTensor> tensors;
    if (model.config.mode == FusionMode::Late) {
        if (!model.late_text || !model.late_image) {
            throw ValidationError("save_model: late fusion model is missing a branch");
        }
        collect_tensors("text.", *model.late_text, tensors);
        collect_tensors("image.", *model.late_image, tensors);
    } else {
        collect_tensors("", model.params, tensors);
    }
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put_string(out, t.name);
        put_u32(out, t.rows);
        put_u32(out, t.cols);
        for (double v : *t.values) put_f64(out, v);
    }
    if (!out) throw ValidationError("checkpoint write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw ValidationError("bad magic in checkpoint: " + path);
    }
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }

    Model model;
    model.config.mode = fusion_mode_from_string(get_string(in));
    model.config.pooling = pooling_from_string(get_string(in));
    model.config.aggregation = aggregation_from_string(get_string(in));
    model.config.d = get_u32(in);
    model.config.h = get_u32(in);
    model.config.g = get_u32(in);
    model.config.image_dim = get_u32(in);
    model.config.class_count = get_u32(in);
    model.config.lambda = get_f64(in);
    model.config.dropout_p = get_f64(in);
    model.config.learning_rate = get_f64(in);
    model.config.freeze_embeddings = get_u32(in) != 0;

    const std::uint32_t class_count = get_u32(in);
    for (std::uint32_t i = 0; i < class_count; ++i) model.classes.push_back(get_string(in));
    const std::uint32_t vocab_count = get_u32(in);
    for (std::uint32_t i = 0; i < vocab_count; ++i) model.vocab.add(get_string(in));

    if (model.config.mode == FusionMode::Late) {
        model.late_text.emplace();
        model.late_image.emplace();
    }
    const std::uint32_t tensor_count = get_u32(in);
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        const std::string name = get_string(in);
        const std::uint32_t rows = get_u32(in);
        const std::uint32_t cols = get_u32(in);
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        for (auto& v : values) v = get_f64(in);
        if (!in) throw ValidationError("truncated checkpoint: " + path);
        if (name.rfind("text.", 0) == 0) {
            assign_tensor(*model.late_text, name.substr(5), rows, cols, std::move(values));
        } else if (name.rfind("image.", 0) == 0) {
            assign_tensor(*model.late_image, name.substr(6), rows, cols, std::move(values));
        } else {
            assign_tensor(model.params, name, rows, cols, std::move(values));
        }
    }
    return model;
}

} // namespace mmfuse
