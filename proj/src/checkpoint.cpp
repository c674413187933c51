#include "unetkit/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "unetkit/errors.hpp"

namespace unetkit {

namespace {

constexpr char kMagic[4] = {'U', 'N', 'T', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Cursor {
  const unsigned char* p;
  std::size_t len;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > len) {
      throw CorruptionError(std::string("truncated checkpoint while reading ") + what, pos);
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }

  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }

  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

Checkpoint checkpoint_from_model(UNetModel& model, int epoch, double best_val_loss) {
  Checkpoint ckpt;
  ckpt.config = model.config;
  ckpt.epoch = epoch;
  ckpt.best_val_loss = best_val_loss;
  for (const auto& view : named_state(model)) {
    Checkpoint::Record rec;
    rec.name = view.name;
    rec.dims = view.dims;
    rec.values.assign(view.values, view.values + view.count);
    ckpt.records.push_back(std::move(rec));
  }
  return ckpt;
}

UNetModel model_from_checkpoint(const Checkpoint& ckpt) {
  UNetModel model = build_unet<float>(ckpt.config, 0);
  auto views = named_state(model);
  if (views.size() != ckpt.records.size()) {
    throw FormatError("checkpoint has " + std::to_string(ckpt.records.size()) +
                      " tensor records, model expects " + std::to_string(views.size()));
  }
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& rec = ckpt.records[i];
    auto& view = views[i];
    if (rec.name != view.name) {
      throw FormatError("checkpoint record '" + rec.name + "' where '" + view.name +
                        "' was expected");
    }
    if (rec.dims != view.dims || static_cast<long>(rec.values.size()) != view.count) {
      throw FormatError("checkpoint record '" + rec.name + "' has mismatched shape");
    }
    std::memcpy(view.values, rec.values.data(), rec.values.size() * sizeof(float));
  }
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, Checkpoint::kVersion);
  put_i32(buf, ckpt.config.in_channels);
  put_i32(buf, ckpt.config.out_channels);
  put_i32(buf, ckpt.config.base_channels);
  put_i32(buf, ckpt.config.depth);
  put_i32(buf, ckpt.epoch);
  put_f64(buf, ckpt.best_val_loss);
  put_u32(buf, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& rec : ckpt.records) {
    put_u32(buf, static_cast<std::uint32_t>(rec.name.size()));
    buf.append(rec.name);
    put_u32(buf, static_cast<std::uint32_t>(rec.dims.size()));
    for (int d : rec.dims) put_i32(buf, d);
    put_u64(buf, static_cast<std::uint64_t>(rec.values.size()));
    for (float v : rec.values) put_f32(buf, v);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint path for writing: " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.flush();
    if (!out.good()) {
      std::remove(tmp.c_str());
      throw IoError("failed writing checkpoint: " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("failed renaming checkpoint into place: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Cursor cur{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};

  const std::string magic = cur.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  const std::uint32_t version = cur.u32("version");
  if (version != Checkpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(Checkpoint::kVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.config.in_channels = cur.i32("config.in_channels");
  ckpt.config.out_channels = cur.i32("config.out_channels");
  ckpt.config.base_channels = cur.i32("config.base_channels");
  ckpt.config.depth = cur.i32("config.depth");
  if (ckpt.config.in_channels < 1 || ckpt.config.out_channels < 1 ||
      ckpt.config.base_channels < 1 || ckpt.config.depth < 1) {
    throw FormatError("checkpoint config block is invalid");
  }
  ckpt.epoch = cur.i32("epoch");
  ckpt.best_val_loss = cur.f64("best_val_loss");
  const std::uint32_t count = cur.u32("record count");
  if (count > 1'000'000u) {
    throw CorruptionError("implausible checkpoint record count " + std::to_string(count),
                          cur.pos - 4);
  }
  ckpt.records.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    Checkpoint::Record rec;
    const std::uint32_t name_len = cur.u32("record name length");
    if (name_len == 0 || name_len > 4096) {
      throw CorruptionError("implausible record name length " + std::to_string(name_len),
                            cur.pos - 4);
    }
    rec.name = cur.str(name_len, "record name");
    const std::uint32_t ndims = cur.u32("record rank");
    if (ndims == 0 || ndims > 8) {
      throw CorruptionError("implausible record rank " + std::to_string(ndims), cur.pos - 4);
    }
    std::uint64_t prod = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      const std::int32_t dim = cur.i32("record dim");
      if (dim < 1) throw CorruptionError("non-positive record dim", cur.pos - 4);
      rec.dims.push_back(dim);
      prod *= static_cast<std::uint64_t>(dim);
    }
    const std::uint64_t n_values = cur.u64("record value count");
    if (n_values != prod) {
      throw CorruptionError("record '" + rec.name + "' value count disagrees with dims",
                            cur.pos - 8);
    }
    rec.values.resize(n_values);
    for (std::uint64_t i = 0; i < n_values; ++i) rec.values[i] = cur.f32("record values");
    ckpt.records.push_back(std::move(rec));
  }
  if (cur.pos != cur.len) {
    throw CorruptionError("trailing bytes after last record", cur.pos);
  }
  return ckpt;
}

}  // namespace unetkit
