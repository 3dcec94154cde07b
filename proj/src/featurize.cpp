#include "cfgkit/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include "cfgkit/errors.hpp"
#include "cfgkit/rng.hpp"

namespace cfgkit {

const BitField& layout_field(std::string_view name) {
    for (const auto& f : kInstructionLayout) {
        if (f.name == name) return f;
    }
    throw ArgumentError("no layout field named '" + std::string(name) + "'");
}

namespace {

void put(BitVector439& bits, const BitField& field, std::uint64_t value, int offset_in_field = 0, int width = -1) {
    if (width < 0) width = field.width;
    for (int i = 0; i < width && i < 64; ++i) {
        if ((value >> i) & 1U) bits.set(static_cast<std::size_t>(field.offset + offset_in_field + i));
    }
}

int width_code(int width) {
    switch (width) {
        case 1: return 0;
        case 2: return 1;
        case 4: return 2;
        case 8: return 3;
        default: throw EncodingError("operand width must be 1, 2, 4 or 8 bytes, got " + std::to_string(width));
    }
}

std::uint64_t truncate_value(const SizedValue& v, const char* what) {
    width_code(v.width);
    if (v.width == 8) return static_cast<std::uint64_t>(v.value);
    const int bits = 8 * v.width;
    const std::int64_t umax = (std::int64_t{1} << bits) - 1;
    const std::int64_t smin = -(std::int64_t{1} << (bits - 1));
    if (v.value > umax || v.value < smin) {
        throw EncodingError(std::string(what) + " value " + std::to_string(v.value) + " does not fit in " +
                            std::to_string(v.width) + " byte(s)");
    }
    return static_cast<std::uint64_t>(v.value) & static_cast<std::uint64_t>(umax);
}

}  // namespace

BitVector439 encode_instruction(const InstructionRecord& ins, const MnemonicTable& mnemonics) {
    if (mnemonics.size() > static_cast<std::size_t>(kMnemonicClasses)) {
        throw ArgumentError("mnemonic table holds more than " + std::to_string(kMnemonicClasses) + " classes");
    }
    if (ins.opcode.empty() || ins.opcode.size() > 3) {
        throw EncodingError("opcode must be 1 to 3 bytes, got " + std::to_string(ins.opcode.size()));
    }
    if (ins.legacy_prefixes.size() > 4) throw EncodingError("at most 4 legacy prefixes");
    // A zero byte would be indistinguishable from an absent trailing prefix.
    if (std::find(ins.legacy_prefixes.begin(), ins.legacy_prefixes.end(), 0) != ins.legacy_prefixes.end()) {
        throw EncodingError("0x00 is not a prefix byte");
    }
    if (ins.operand_count < 0 || ins.operand_count > 7) {
        throw EncodingError("operand count must be 0..7, got " + std::to_string(ins.operand_count));
    }
    if (ins.length < 1 || ins.length > 31) {
        throw EncodingError("instruction length must be 1..31 bytes, got " + std::to_string(ins.length));
    }

    BitVector439 bits;
    const auto& flags = layout_field("prefix_flags");
    const auto& prefix_bytes = layout_field("prefix_bytes");
    for (std::size_t j = 0; j < ins.legacy_prefixes.size(); ++j) {
        const std::uint8_t p = ins.legacy_prefixes[j];
        const auto it = std::find(kLegacyPrefixes.begin(), kLegacyPrefixes.end(), p);
        const auto flag = static_cast<std::size_t>(it - kLegacyPrefixes.begin());  // 11 = other
        bits.set(static_cast<std::size_t>(flags.offset) + flag);
        put(bits, prefix_bytes, p, static_cast<int>(8 * j), 8);
    }
    if (ins.rex) {
        put(bits, layout_field("rex_present"), 1);
        put(bits, layout_field("rex_byte"), *ins.rex);
    }
    put(bits, layout_field("opcode_length"), ins.opcode.size() - 1);
    for (std::size_t j = 0; j < ins.opcode.size(); ++j) {
        put(bits, layout_field("opcode_bytes"), ins.opcode[j], static_cast<int>(8 * j), 8);
    }
    if (ins.modrm) {
        put(bits, layout_field("modrm_present"), 1);
        put(bits, layout_field("modrm_byte"), *ins.modrm);
    }
    if (ins.sib) {
        put(bits, layout_field("sib_present"), 1);
        put(bits, layout_field("sib_byte"), *ins.sib);
    }
    if (ins.displacement) {
        put(bits, layout_field("disp_present"), 1);
        put(bits, layout_field("disp_width"), static_cast<std::uint64_t>(width_code(ins.displacement->width)));
        put(bits, layout_field("disp_value"), truncate_value(*ins.displacement, "displacement"));
    }
    if (ins.immediate) {
        put(bits, layout_field("imm_present"), 1);
        put(bits, layout_field("imm_width"), static_cast<std::uint64_t>(width_code(ins.immediate->width)));
        put(bits, layout_field("imm_value"), truncate_value(*ins.immediate, "immediate"));
    }
    if (const auto it = mnemonics.find(ins.mnemonic); it != mnemonics.end()) {
        if (it->second < 0 || it->second >= kMnemonicClasses) {
            throw ArgumentError("mnemonic class index out of range for '" + it->first + "'");
        }
        bits.set(static_cast<std::size_t>(layout_field("mnemonic").offset + it->second));
    }
    put(bits, layout_field("operand_count"), static_cast<std::uint64_t>(ins.operand_count));
    put(bits, layout_field("length"), static_cast<std::uint64_t>(ins.length));
    return bits;
}

BlockFeature to_feature(const BitVector439& bits) {
    BlockFeature x = BlockFeature::Zero(kInstructionBits);
    for (int i = 0; i < kInstructionBits; ++i) {
        if (bits.test(static_cast<std::size_t>(i))) x[i] = 1.0;
    }
    return x;
}

BlockFeature block_feature(std::span<const BitVector439> instructions) {
    if (instructions.empty()) throw ArgumentError("block feature of an empty block");
    BlockFeature sum = BlockFeature::Zero(kInstructionBits);
    for (const auto& bits : instructions) sum += to_feature(bits);
    return sum / static_cast<double>(instructions.size());
}

EncoderModel reconstruction_gradient(const EncoderModel& model, const Eigen::MatrixXd& batch) {
    const Eigen::MatrixXd hidden = ((model.w_enc * batch).colwise() + model.b_enc).array().tanh().matrix();
    const Eigen::MatrixXd recon = (model.w_dec * hidden).colwise() + model.b_dec;
    const Eigen::MatrixXd d_recon = (recon - batch) * (2.0 / static_cast<double>(batch.size()));
    const Eigen::MatrixXd d_pre = ((model.w_dec.transpose() * d_recon).array() * (1.0 - hidden.array().square())).matrix();

    EncoderModel grad;
    grad.w_dec = d_recon * hidden.transpose();
    grad.b_dec = d_recon.rowwise().sum();
    grad.w_enc = d_pre * batch.transpose();
    grad.b_enc = d_pre.rowwise().sum();
    return grad;
}

EncoderModel init_autoencoder(int input_dim, int hidden_dim, std::uint64_t seed) {
    if (input_dim < 1 || hidden_dim < 1) throw ArgumentError("autoencoder dimensions must be positive");
    Rng rng(seed);
    auto fill = [&rng](auto& m, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
        }
    };
    EncoderModel m = EncoderModel::zeros(input_dim, hidden_dim);
    fill(m.w_enc, input_dim);
    fill(m.b_enc, input_dim);
    fill(m.w_dec, hidden_dim);
    fill(m.b_dec, hidden_dim);
    m.seed = seed;
    return m;
}

EncoderModel train_autoencoder(std::span<const BlockFeature> data, const AutoencoderOptions& options) {
    if (data.size() < 2) throw ArgumentError("autoencoder training needs at least 2 samples");
    if (!(options.learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
    if (options.epochs < 0 || options.batch_size < 1) throw ArgumentError("epochs >= 0 and batch size >= 1 required");
    const auto dim = data.front().size();
    for (const auto& x : data) {
        if (x.size() != dim) throw ArgumentError("training samples differ in dimension");
    }

    Eigen::MatrixXd all(dim, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) all.col(static_cast<Eigen::Index>(i)) = data[i];

    EncoderModel model = init_autoencoder(static_cast<int>(dim), options.hidden_dim, options.seed);
    model.learning_rate = options.learning_rate;
    model.epochs = options.epochs;
    model.batch_size = options.batch_size;

    // Shuffling draws from a stream separate from the init stream.
    Rng shuffle_rng(options.seed ^ 0x5deece66dULL);
    std::vector<Eigen::Index> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    double loss = reconstruction_loss(model, all);
    if (!std::isfinite(loss)) throw TrainingError("non-finite initial loss", 0);
    std::vector<double> history{loss};
    EncoderModel best = model;
    double best_loss = loss;
    int best_epoch = 0;

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
            Eigen::MatrixXd batch(dim, static_cast<Eigen::Index>(stop - start));
            for (std::size_t i = start; i < stop; ++i) batch.col(static_cast<Eigen::Index>(i - start)) = all.col(order[i]);
            const EncoderModel g = reconstruction_gradient(model, batch);
            model.w_enc -= options.learning_rate * g.w_enc;
            model.b_enc -= options.learning_rate * g.b_enc;
            model.w_dec -= options.learning_rate * g.w_dec;
            model.b_dec -= options.learning_rate * g.b_dec;
        }
        loss = reconstruction_loss(model, all);
        if (!std::isfinite(loss) || !model.all_finite()) throw TrainingError("autoencoder diverged", epoch);
        history.push_back(loss);
        if (loss <= best_loss) {
            best_loss = loss;
            best = model;
            best_epoch = epoch;
        }
    }
    best.loss_history = std::move(history);
    best.best_epoch = best_epoch;
    return best;
}

Eigen::MatrixXd projection_matrix(std::uint64_t seed, int input_dim, int output_dim) {
    Rng rng(seed);
    Eigen::MatrixXd p(output_dim, input_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (int i = 0; i < output_dim; ++i) {
        for (int j = 0; j < input_dim; ++j) p(i, j) = rng.normal() * scale;
    }
    return p;
}

Eigen::VectorXd random_projection(std::uint64_t seed, const BlockFeature& x) {
    if (x.size() != kInstructionBits) {
        throw ArgumentError("random projection expects a " + std::to_string(kInstructionBits) + "-dim feature");
    }
    static std::mutex mutex;
    static std::unordered_map<std::uint64_t, Eigen::MatrixXd> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(seed);
    if (it == cache.end()) it = cache.emplace(seed, projection_matrix(seed)).first;
    return it->second * x;
}

}  // namespace cfgkit
