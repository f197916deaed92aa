#include "mcne/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mcne {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& value, const std::string& source, std::size_t line, const std::string& key) {
  std::istringstream in(value);
  T out{};
  char extra;
  if (!(in >> out) || (in >> extra)) throw ParseError(source, line, "bad value for '" + key + "': '" + value + "'");
  return out;
}

std::vector<int> parse_list(const std::string& value, const std::string& source, std::size_t line,
                            const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(trim(item), source, line, key));
  return out;
}

bool parse_bool(const std::string& value, const std::string& source, std::size_t line, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError(source, line, "bad value for '" + key + "': '" + value + "' (expected true or false)");
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

TrainConfig parse_train_config(std::istream& in, const std::string& source) {
  TrainConfig c;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(source, line, "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    try {
      if (key == "dims") c.dims = parse_list(value, source, line, key);
      else if (key == "fanouts") c.fanouts = parse_list(value, source, line, key);
      else if (key == "attention_hidden") c.attention_hidden = parse_number<int>(value, source, line, key);
      else if (key == "learning_rate") c.learning_rate = parse_number<double>(value, source, line, key);
      else if (key == "batch_size") c.batch_size = parse_number<int>(value, source, line, key);
      else if (key == "negatives") c.negatives = parse_number<int>(value, source, line, key);
      else if (key == "lambda") c.lambda = parse_number<double>(value, source, line, key);
      else if (key == "epochs") c.epochs = parse_number<int>(value, source, line, key);
      else if (key == "seed") c.seed = parse_number<std::uint64_t>(value, source, line, key);
      else if (key == "patience") c.patience = parse_number<int>(value, source, line, key);
      else if (key == "positives_per_user") c.positives_per_user = parse_number<int>(value, source, line, key);
      else if (key == "variant") c.variant = value;
      else if (key == "init_std") c.init_std = parse_number<double>(value, source, line, key);
      else if (key == "mask_init_range") c.mask_init_range = parse_number<double>(value, source, line, key);
      else if (key == "full_neighbor_inference") c.full_neighbor_inference = parse_bool(value, source, line, key);
      else if (key == "eval_negatives") c.eval_negatives = parse_number<int>(value, source, line, key);
      else throw ParseError(source, line, "unknown key '" + key + "'");
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_train_config(in, path.string());
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "dims = " << join(c.dims) << '\n'
      << "fanouts = " << join(c.fanouts) << '\n'
      << "attention_hidden = " << c.attention_hidden << '\n'
      << "learning_rate = " << fmt_double(c.learning_rate) << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "negatives = " << c.negatives << '\n'
      << "lambda = " << fmt_double(c.lambda) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "seed = " << c.seed << '\n'
      << "patience = " << c.patience << '\n'
      << "positives_per_user = " << c.positives_per_user << '\n'
      << "variant = " << c.variant << '\n'
      << "init_std = " << fmt_double(c.init_std) << '\n'
      << "mask_init_range = " << fmt_double(c.mask_init_range) << '\n'
      << "full_neighbor_inference = " << (c.full_neighbor_inference ? "true" : "false") << '\n'
      << "eval_negatives = " << c.eval_negatives << '\n';
  return out.str();
}

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw IoError("SHA-1 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  return sha1_hex(blob + content);
}

std::string config_hash(const TrainConfig& config) { return sha1_hex(format_train_config(config)); }

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "manifest.txt";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "command = " << m.command << '\n';
  out << "arguments =";
  for (const auto& a : m.arguments) out << ' ' << a;
  out << '\n';
  out << "seed = " << m.seed << '\n';
  if (!m.config_hash.empty()) out << "config_hash = " << m.config_hash << '\n';
  for (const auto& input : m.inputs) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(input)) {
      for (const auto& e : std::filesystem::directory_iterator(input)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.txt") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
    } else if (std::filesystem::exists(input)) {
      files.push_back(input);
    }
    for (const auto& f : files) out << "input " << git_blob_sha1(f) << ' ' << f.string() << '\n';
  }
  if (!m.config_text.empty()) out << "[config]\n" << m.config_text;
}

}  // namespace mcne
