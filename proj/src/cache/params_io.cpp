#include "safsar/cache/params_io.hpp"

#include <bit>
#include <cstring>

#include "detail.hpp"
#include "safsar/errors.hpp"

namespace safsar::cache {

using nlohmann::json;
using detail::get_le;
using detail::put_le;

namespace {

constexpr char kParamsMagic[4] = {'S', 'F', 'P', 'S'};
constexpr std::uint32_t kParamsVersion = 1;

template <typename V>
void read_opt(const json& j, const char* key, V& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field '") + key + "' has the wrong type");
    }
}

// Bounds-checked reader over a byte buffer.
class Cursor {
public:
    explicit Cursor(const std::vector<char>& bytes) : bytes_(bytes) {}

    const char* take(std::uint64_t n) {
        if (n > bytes_.size() - pos_) {
            throw CacheCorruptionError("params file truncated at byte " + std::to_string(pos_));
        }
        const char* p = bytes_.data() + pos_;
        pos_ += static_cast<std::size_t>(n);
        return p;
    }
    template <typename U>
    U get() {
        return get_le<U>(take(sizeof(U)));
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

json pipeline_config_to_json(const PipelineConfig& c) {
    return {{"dim", c.shape.dim},
            {"heads", c.shape.heads},
            {"ffn_ratio", c.shape.ffn_ratio},
            {"video_depth", c.video_depth},
            {"text_depth", c.text_depth},
            {"tubelet", {c.tubelet_frames, c.tubelet_height, c.tubelet_width}},
            {"freeze_depth", c.freeze_depth},
            {"frames", c.frames},
            {"augment",
             {{"crop_height", c.augment.crop_height},
              {"crop_width", c.augment.crop_width},
              {"flip_probability", c.augment.flip_probability},
              {"jitter", {c.augment.jitter_low, c.augment.jitter_high}}}},
            {"lambda", c.model.lambda},
            {"fusion_layers", c.model.fusion_layers},
            {"use_fusion", c.model.use_fusion},
            {"use_tlm", c.model.use_tlm},
            {"temperature", c.model.temperature},
            {"layer_norm_eps", 1e-5}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
    PipelineConfig c;
    read_opt(j, "dim", c.shape.dim);
    read_opt(j, "heads", c.shape.heads);
    read_opt(j, "ffn_ratio", c.shape.ffn_ratio);
    read_opt(j, "video_depth", c.video_depth);
    read_opt(j, "text_depth", c.text_depth);
    if (j.contains("tubelet")) {
        std::array<std::size_t, 3> t{};
        read_opt(j, "tubelet", t);
        c.tubelet_frames = t[0];
        c.tubelet_height = t[1];
        c.tubelet_width = t[2];
    }
    read_opt(j, "freeze_depth", c.freeze_depth);
    read_opt(j, "frames", c.frames);
    if (j.contains("augment")) {
        const json& a = j["augment"];
        read_opt(a, "crop_height", c.augment.crop_height);
        read_opt(a, "crop_width", c.augment.crop_width);
        read_opt(a, "flip_probability", c.augment.flip_probability);
        if (a.contains("jitter")) {
            std::array<double, 2> jit{};
            read_opt(a, "jitter", jit);
            c.augment.jitter_low = jit[0];
            c.augment.jitter_high = jit[1];
        }
    }
    read_opt(j, "lambda", c.model.lambda);
    read_opt(j, "fusion_layers", c.model.fusion_layers);
    read_opt(j, "use_fusion", c.model.use_fusion);
    read_opt(j, "use_tlm", c.model.use_tlm);
    read_opt(j, "temperature", c.model.temperature);
    return c;
}

json model_metadata(const Model& m) {
    json vocab = json::array();
    for (std::size_t i = 0; i < m.vocab.size(); ++i) vocab.push_back(m.vocab.token(i));
    return {{"config", pipeline_config_to_json(m.config)},
            {"input", m.input == Dataset::Kind::clips ? "clip" : "feature"},
            {"channels", m.channels},
            {"vocabulary", vocab},
            {"train_classes", m.train_classes},
            {"has_text_encoder", m.has_text_encoder}};
}

void save_model(const Model& m, const std::filesystem::path& path) {
    std::vector<char> out(std::begin(kParamsMagic), std::end(kParamsMagic));
    put_le(out, kParamsVersion);
    const std::string meta = model_metadata(m).dump();
    put_le(out, static_cast<std::uint64_t>(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());
    put_le(out, static_cast<std::uint64_t>(m.params.count()));
    for (const auto& e : m.params.entries()) {
        put_le(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(e.frozen ? 1 : 0);
        put_le(out, static_cast<std::uint32_t>(e.value.rank()));
        for (std::size_t d : e.value.shape()) put_le(out, static_cast<std::uint64_t>(d));
        for (float f : e.value.values()) put_le(out, std::bit_cast<std::uint32_t>(f));
    }
    detail::write_atomic(path, out);
}

Model load_model(const std::filesystem::path& path) {
    const std::vector<char> bytes = detail::read_file(path);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kParamsMagic, 4) != 0) {
        throw NotACacheError(path.string() + " is not a parameter file");
    }
    Cursor cur(bytes);
    cur.take(4);
    const auto version = cur.get<std::uint32_t>();
    if (version != kParamsVersion) {
        throw CacheVersionError("parameter file version " + std::to_string(version) + " is not supported");
    }
    const auto meta_len = cur.get<std::uint64_t>();
    const char* meta_p = cur.take(meta_len);
    json meta = json::parse(meta_p, meta_p + meta_len, nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) throw CacheCorruptionError("parameter metadata is not JSON");

    Model m;
    try {
        m.config = pipeline_config_from_json(meta.at("config"));
        m.input = meta.at("input").get<std::string>() == "clip" ? Dataset::Kind::clips : Dataset::Kind::features;
        m.channels = meta.at("channels").get<std::size_t>();
        const auto tokens = meta.at("vocabulary").get<std::vector<std::string>>();
        if (tokens.size() < 2 || tokens[0] != Vocabulary::kUnkToken || tokens[1] != Vocabulary::kPadToken) {
            throw CacheCorruptionError("vocabulary must start with the UNK and PAD tokens");
        }
        for (std::size_t i = 2; i < tokens.size(); ++i) m.vocab.add(tokens[i]);
        m.train_classes = meta.at("train_classes").get<std::vector<std::size_t>>();
        m.has_text_encoder = meta.at("has_text_encoder").get<bool>();
    } catch (const json::exception& e) {
        throw CacheCorruptionError(std::string("parameter metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw CacheCorruptionError(std::string("parameter metadata: ") + e.what());
    }

    const auto count = cur.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = cur.get<std::uint32_t>();
        const char* name_p = cur.take(name_len);
        std::string name(name_p, name_len);
        const bool frozen = cur.get<std::uint8_t>() != 0;
        const auto rank = cur.get<std::uint32_t>();
        if (rank == 0 || rank > 8) throw CacheCorruptionError("tensor '" + name + "' has rank " + std::to_string(rank));
        Shape shape;
        std::uint64_t size = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto d = cur.get<std::uint64_t>();
            if (d == 0 || size > (bytes.size() / 4) / d) {
                throw CacheCorruptionError("tensor '" + name + "' has an impossible shape");
            }
            size *= d;
            shape.push_back(static_cast<std::size_t>(d));
        }
        const char* data = cur.take(size * 4);
        Tensor<float> t(shape);
        for (std::uint64_t k = 0; k < size; ++k) {
            t[static_cast<std::size_t>(k)] = std::bit_cast<float>(get_le<std::uint32_t>(data + 4 * k));
        }
        try {
            m.params.add(std::move(name), std::move(t), frozen);
        } catch (const ContractError& e) {
            throw CacheCorruptionError(e.what());
        }
    }
    if (!cur.done()) throw CacheCorruptionError("trailing bytes after the last tensor");
    return m;
}

}  // namespace safsar::cache
