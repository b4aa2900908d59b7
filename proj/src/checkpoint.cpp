#include "nmf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace nmf {

namespace {

constexpr char kMagic[4] = {'N', 'M', 'F', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f32(std::vector<unsigned char>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, const std::filesystem::path& path) : buf_(buf), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw CheckpointError("checkpoint " + path_.string() + " is truncated");
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  const unsigned char* data() const { return buf_.data() + pos_; }

 private:
  const std::vector<unsigned char>& buf_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

void put_layout(std::vector<unsigned char>& out, const Branch<float>& b) {
  put_u32(out, static_cast<std::uint32_t>(b.encoder.layers.size()));
  put_u32(out, static_cast<std::uint32_t>(b.head.layers.size()));
  for (const auto* mlp : {&b.encoder, &b.head})
    for (const auto& l : mlp->layers) {
      put_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
      put_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
    }
}

void put_params(std::vector<unsigned char>& out, const Branch<float>& b) {
  for (const auto* mlp : {&b.encoder, &b.head})
    for (const auto& l : mlp->layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put_f32(out, l.weight(r, c));
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f32(out, l.bias[r]);
    }
}

Branch<float> read_layout(Reader& in, HeadOutput output, const std::filesystem::path& path) {
  Branch<float> b;
  b.output = output;
  const std::uint32_t enc_layers = in.u32();
  const std::uint32_t head_layers = in.u32();
  if (enc_layers == 0 || head_layers == 0 || enc_layers > 64 || head_layers > 64)
    throw CheckpointError("checkpoint " + path.string() + " has an invalid layer count");
  auto read_mlp = [&](Mlp<float>& mlp, std::uint32_t count) {
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t rows = in.u32();
      const std::uint32_t cols = in.u32();
      if (rows == 0 || cols == 0 || rows > (1u << 16) || cols > (1u << 16))
        throw CheckpointError("checkpoint " + path.string() + " has an invalid layer shape");
      mlp.layers.push_back({MatrixX<float>(rows, cols), VectorX<float>(rows)});
    }
    for (std::size_t i = 1; i < mlp.layers.size(); ++i)
      if (mlp.layers[i].weight.cols() != mlp.layers[i - 1].weight.rows())
        throw CheckpointError("checkpoint " + path.string() + " has inconsistent layer shapes");
  };
  read_mlp(b.encoder, enc_layers);
  read_mlp(b.head, head_layers);
  if (b.head.layers.front().weight.cols() != b.encoder.layers.back().weight.rows() + kPoseDim ||
      b.head.layers.back().weight.rows() != 1 || b.encoder.layers.front().weight.cols() != 3)
    throw CheckpointError("checkpoint " + path.string() + " does not describe a value branch");
  return b;
}

void read_params(Reader& in, Branch<float>& b) {
  for (auto* mlp : {&b.encoder, &b.head})
    for (auto& l : mlp->layers) {
      in.need(static_cast<std::size_t>(l.weight.size() + l.bias.size()) * 4);
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = in.f32();
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = in.f32();
    }
}

}  // namespace

void save_checkpoint(const ValueModel& model, const std::filesystem::path& path) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_layout(out, model.path);
  put_layout(out, model.collision);
  put_params(out, model.path);
  put_params(out, model.collision);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("failed writing " + path.string());
}

ValueModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader in(buf, path);
  in.need(4);
  if (std::memcmp(in.data(), kMagic, 4) != 0) throw CheckpointError("checkpoint " + path.string() + " has bad magic bytes");
  in.skip(4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint " + path.string() + " has unsupported version " + std::to_string(version));
  ValueModel m;
  m.path = read_layout(in, HeadOutput::softplus, path);
  m.collision = read_layout(in, HeadOutput::sigmoid, path);
  read_params(in, m.path);
  read_params(in, m.collision);
  if (in.remaining() != 0) throw CheckpointError("checkpoint " + path.string() + " has trailing bytes");
  return m;
}

}  // namespace nmf
