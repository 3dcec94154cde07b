#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cfgkit {

inline constexpr int kInstructionBits = 439;
inline constexpr int kEmbeddingDim = 64;
inline constexpr int kMnemonicClasses = 200;

using BitVector439 = std::bitset<kInstructionBits>;
using BlockFeature = Eigen::VectorXd;
using MnemonicTable = std::map<std::string, int>;

// An immediate or displacement operand. Stored truncated to `width` bytes and
// zero-extended, so negative values that fit the signed range are accepted.
struct SizedValue {
    std::int64_t value = 0;
    int width = 1;  // 1, 2, 4 or 8 bytes
};

struct InstructionRecord {
    std::vector<std::uint8_t> legacy_prefixes;
    std::optional<std::uint8_t> rex;
    std::vector<std::uint8_t> opcode;
    std::optional<std::uint8_t> modrm;
    std::optional<std::uint8_t> sib;
    std::optional<SizedValue> displacement;
    std::optional<SizedValue> immediate;
    std::string mnemonic;
    int operand_count = 0;
    int length = 1;
    // Basic block (node id) the instruction belongs to, when read from a listing.
    std::optional<int> block;
};

struct BitField {
    std::string_view name;
    int offset;
    int width;
};

// Bit layout of the instruction encoding. Every field is stored LSB first;
// multi-byte payloads are little-endian (byte j at offset + 8*j).
inline constexpr std::array<BitField, 19> kInstructionLayout{{
    {"prefix_flags", 0, 12},
    {"prefix_bytes", 12, 32},
    {"rex_present", 44, 1},
    {"rex_byte", 45, 8},
    {"opcode_length", 53, 2},
    {"opcode_bytes", 55, 24},
    {"modrm_present", 79, 1},
    {"modrm_byte", 80, 8},
    {"sib_present", 88, 1},
    {"sib_byte", 89, 8},
    {"disp_present", 97, 1},
    {"disp_width", 98, 2},
    {"disp_value", 100, 64},
    {"imm_present", 164, 1},
    {"imm_width", 165, 2},
    {"imm_value", 167, 64},
    {"mnemonic", 231, 200},
    {"operand_count", 431, 3},
    {"length", 434, 5},
}};

const BitField& layout_field(std::string_view name);

// Legacy prefixes with a dedicated presence flag; any other byte in the
// prefix list sets the final ("other") flag.
inline constexpr std::array<std::uint8_t, 11> kLegacyPrefixes{0xF0, 0xF2, 0xF3, 0x2E, 0x36, 0x3E,
                                                                0x26, 0x64, 0x65, 0x66, 0x67};

BitVector439 encode_instruction(const InstructionRecord& ins, const MnemonicTable& mnemonics);

BlockFeature to_feature(const BitVector439& bits);

// Component-wise mean of the block's instruction encodings.
BlockFeature block_feature(std::span<const BitVector439> instructions);

// h = tanh(W_enc x + b_enc), x_hat = W_dec h + b_dec.
template <typename Scalar>
struct EncoderModelT {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Matrix w_enc;
    Vector b_enc;
    Matrix w_dec;
    Vector b_dec;

    std::uint64_t seed = 0;
    double learning_rate = 0.0;
    int epochs = 0;
    int batch_size = 0;
    // Full-data loss before training and after each epoch.
    std::vector<double> loss_history;
    int best_epoch = 0;

    int input_dim() const { return static_cast<int>(w_enc.cols()); }
    int hidden_dim() const { return static_cast<int>(w_enc.rows()); }

    static EncoderModelT zeros(int input_dim, int hidden_dim) {
        EncoderModelT m;
        m.w_enc = Matrix::Zero(hidden_dim, input_dim);
        m.b_enc = Vector::Zero(hidden_dim);
        m.w_dec = Matrix::Zero(input_dim, hidden_dim);
        m.b_dec = Vector::Zero(input_dim);
        return m;
    }

    bool all_finite() const {
        return w_enc.allFinite() && b_enc.allFinite() && w_dec.allFinite() && b_dec.allFinite();
    }
};

using EncoderModel = EncoderModelT<double>;

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> compress(const EncoderModelT<Scalar>& model,
                                                  const Eigen::MatrixBase<Derived>& x) {
    return (model.w_enc * x + model.b_enc).array().tanh().matrix();
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> reconstruct(const EncoderModelT<Scalar>& model,
                                                     const Eigen::MatrixBase<Derived>& x) {
    return model.w_dec * compress(model, x) + model.b_dec;
}

// Mean over samples (columns) and dimensions of the squared reconstruction error.
template <typename Scalar>
Scalar reconstruction_loss(const EncoderModelT<Scalar>& model,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& batch) {
    const auto hidden = ((model.w_enc * batch).colwise() + model.b_enc).array().tanh().matrix();
    const auto recon = ((model.w_dec * hidden).colwise() + model.b_dec).eval();
    return (recon - batch).squaredNorm() / static_cast<Scalar>(batch.size());
}

// Gradient of reconstruction_loss with respect to every parameter; the
// returned model holds gradients in place of weights.
EncoderModel reconstruction_gradient(const EncoderModel& model, const Eigen::MatrixXd& batch);

struct AutoencoderOptions {
    std::uint64_t seed = 0;
    int epochs = 50;
    double learning_rate = 0.5;
    int batch_size = 16;
    int hidden_dim = kEmbeddingDim;
};

// Seeded init (uniform in +-1/sqrt(fan_in)), seeded per-epoch shuffling,
// plain minibatch SGD. Returns the parameters with the lowest full-data loss
// seen, so the final loss never exceeds the initial one. Throws
// TrainingError on a non-finite loss.
EncoderModel train_autoencoder(std::span<const BlockFeature> data, const AutoencoderOptions& options);

EncoderModel init_autoencoder(int input_dim, int hidden_dim, std::uint64_t seed);

// Training-free fallback: fixed seeded Gaussian matrix scaled by 1/sqrt(dim).
Eigen::MatrixXd projection_matrix(std::uint64_t seed, int input_dim = kInstructionBits,
                                  int output_dim = kEmbeddingDim);
Eigen::VectorXd random_projection(std::uint64_t seed, const BlockFeature& x);

}  // namespace cfgkit
