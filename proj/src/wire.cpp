#include "fedperm/wire.hpp"

#include <cstring>
#include <fstream>

#include "fedperm/errors.hpp"

namespace fedperm {

namespace {

constexpr char kUpdateMagic[4] = {'F', 'P', 'R', 'M'};
constexpr char kPublicMagic[4] = {'F', 'P', 'P', 'K'};
constexpr char kSecretMagic[4] = {'F', 'P', 'S', 'K'};

void put_bytes(std::vector<std::uint8_t>& out, const void* data,
               std::size_t len) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + len);
}

template <typename T>
void put_be(std::vector<std::uint8_t>& out, T value) {
  for (int shift = (sizeof(T) - 1) * 8; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>((value >> shift) & 0xff));
  }
}

std::vector<std::uint8_t> mpz_bytes(const mpz_class& v) {
  std::vector<std::uint8_t> buf((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8);
  if (v != 0) {
    std::size_t count = 0;
    mpz_export(buf.data(), &count, 1, 1, 1, 0, v.get_mpz_t());
    buf.resize(count);
  } else {
    buf.clear();
  }
  return buf;
}

void put_mpz(std::vector<std::uint8_t>& out, const mpz_class& v) {
  const auto bytes = mpz_bytes(v);
  put_be<std::uint32_t>(out, static_cast<std::uint32_t>(bytes.size()));
  put_bytes(out, bytes.data(), bytes.size());
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return offset_; }

  void expect_magic(const char (&magic)[4], const char* what) {
    need(4, what);
    if (std::memcmp(bytes_.data() + offset_, magic, 4) != 0) {
      throw FormatError(std::string("bad magic for ") + what, offset_);
    }
    offset_ += 4;
  }

  template <typename T>
  T get_be(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value = static_cast<T>((value << 8) | bytes_[offset_ + i]);
    }
    offset_ += sizeof(T);
    return value;
  }

  mpz_class get_mpz(const char* what) {
    const auto len = get_be<std::uint32_t>(what);
    need(len, what);
    mpz_class out = 0;
    if (len > 0) {
      mpz_import(out.get_mpz_t(), len, 1, 1, 1, 0, bytes_.data() + offset_);
    }
    offset_ += len;
    return out;
  }

  void done() const {
    if (offset_ != bytes_.size()) {
      throw FormatError("trailing bytes", offset_);
    }
  }

 private:
  void need(std::size_t len, const char* what) const {
    if (offset_ + len > bytes_.size()) {
      throw FormatError(std::string("truncated ") + what, offset_);
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_ = 0;
};

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<std::uint8_t> serialize_update(const ClientUpdateMsg& msg) {
  if (!msg.query) {
    throw UsageError("serialize_update: only paillier-mode messages have a "
                     "wire form");
  }
  const auto& query = *msg.query;
  std::vector<std::uint8_t> out;
  put_bytes(out, kUpdateMagic, 4);
  put_be<std::uint16_t>(out, kWireVersion);
  put_be<std::uint64_t>(out, msg.shuffled.size());
  put_be<std::uint32_t>(out, static_cast<std::uint32_t>(query.window));
  put_be<std::uint32_t>(out, static_cast<std::uint32_t>(query.pattern_count));
  put_be<std::uint64_t>(out, query.key_id);
  for (std::uint64_t v : msg.shuffled) put_be<std::uint64_t>(out, v);
  for (const auto& mat : query.matrices) {
    for (const auto& c : mat) put_mpz(out, c.value);
  }
  return out;
}

ClientUpdateMsg parse_update(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.expect_magic(kUpdateMagic, "client update");
  const auto version = r.get_be<std::uint16_t>("version");
  if (version != kWireVersion) {
    throw FormatError("unsupported update version", r.offset() - 2);
  }
  const auto dim = r.get_be<std::uint64_t>("dimension");
  const auto k1 = r.get_be<std::uint32_t>("k1");
  const auto k2 = r.get_be<std::uint32_t>("k2");
  const auto key_id = r.get_be<std::uint64_t>("key_id");
  if (k1 == 0 || k2 == 0 || dim == 0 || dim % (std::uint64_t(k1) * k2) != 0) {
    throw FormatError("update geometry invalid", r.offset());
  }
  ClientUpdateMsg msg;
  msg.true_dim = dim;
  msg.shuffled.reserve(dim);
  for (std::uint64_t i = 0; i < dim; ++i) {
    msg.shuffled.push_back(r.get_be<std::uint64_t>("value"));
  }
  PirQuery query;
  query.window = k1;
  query.pattern_count = k2;
  query.key_id = key_id;
  query.matrices.resize(k2);
  for (auto& mat : query.matrices) {
    mat.reserve(std::size_t(k1) * k1);
    for (std::uint32_t i = 0; i < std::uint32_t(k1) * k1; ++i) {
      mat.push_back(Ciphertext{r.get_mpz("ciphertext"), key_id});
    }
  }
  r.done();
  msg.query = std::move(query);
  return msg;
}

std::size_t serialized_update_size(const ClientUpdateMsg& msg) {
  if (!msg.query) return 0;
  std::size_t size = 4 + 2 + 8 + 4 + 4 + 8 + 8 * msg.shuffled.size();
  for (const auto& mat : msg.query->matrices) {
    for (const auto& c : mat) {
      size += 4 + mpz_bytes(c.value).size();
    }
  }
  return size;
}

void save_public_key(const PublicKey& pk, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  put_bytes(out, kPublicMagic, 4);
  put_be<std::uint16_t>(out, kWireVersion);
  put_be<std::uint32_t>(out, pk.key_bits());
  put_mpz(out, pk.n());
  put_mpz(out, pk.g());
  write_file(path, out);
}

PublicKey load_public_key(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader r(bytes);
  r.expect_magic(kPublicMagic, "public key");
  if (r.get_be<std::uint16_t>("version") != kWireVersion) {
    throw FormatError("unsupported key version", r.offset() - 2);
  }
  const auto key_bits = r.get_be<std::uint32_t>("key_bits");
  mpz_class n = r.get_mpz("n");
  mpz_class g = r.get_mpz("g");
  r.done();
  return PublicKey(key_bits, std::move(n), std::move(g));
}

void save_secret_key(const PaillierKeypair& kp,
                     const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  put_bytes(out, kSecretMagic, 4);
  put_be<std::uint16_t>(out, kWireVersion);
  put_be<std::uint32_t>(out, kp.pk.key_bits());
  put_mpz(out, kp.pk.n());
  put_mpz(out, kp.pk.g());
  put_mpz(out, kp.sk.p());
  put_mpz(out, kp.sk.q());
  write_file(path, out);
}

PaillierKeypair load_secret_key(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader r(bytes);
  r.expect_magic(kSecretMagic, "secret key");
  if (r.get_be<std::uint16_t>("version") != kWireVersion) {
    throw FormatError("unsupported key version", r.offset() - 2);
  }
  const auto key_bits = r.get_be<std::uint32_t>("key_bits");
  mpz_class n = r.get_mpz("n");
  mpz_class g = r.get_mpz("g");
  mpz_class p = r.get_mpz("p");
  mpz_class q = r.get_mpz("q");
  r.done();
  PaillierKeypair kp;
  kp.pk = PublicKey(key_bits, std::move(n), std::move(g));
  kp.sk = SecretKey(kp.pk, std::move(p), std::move(q));
  return kp;
}

}  // namespace fedperm
