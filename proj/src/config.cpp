#include "quisg/config.hpp"

#include <fstream>
#include <sstream>

namespace quisg::cfg {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' needs an unsigned integer, got '" +
                          value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' needs a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config key '" + key + "' needs true or false, got '" + value + "'");
}

}  // namespace

void apply_override(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "seed") c.seed = parse_u64(key, value);
  else if (key == "d_h") c.d_h = parse_u64(key, value);
  else if (key == "mixing_layers") c.mixing_layers = parse_u64(key, value);
  else if (key == "vocab") c.vocab = parse_u64(key, value);
  else if (key == "window_radius") c.window_radius = parse_u64(key, value);
  else if (key == "position_scale") c.position_scale = parse_double(key, value);
  else if (key == "max_tokens") c.max_tokens = parse_u64(key, value);
  else if (key == "m") c.m = parse_u64(key, value);
  else if (key == "k") c.k = parse_u64(key, value);
  else if (key == "k_w") c.k_w = parse_u64(key, value);
  else if (key == "heads") c.heads = parse_u64(key, value);
  else if (key == "gat_layers") c.gat_layers = parse_u64(key, value);
  else if (key == "leaky_slope") c.leaky_slope = parse_double(key, value);
  else if (key == "f") c.f = parse_double(key, value);
  else if (key == "beam") c.beam = parse_u64(key, value);
  else if (key == "max_answer_tokens") c.max_answer_tokens = parse_u64(key, value);
  else if (key == "lr") c.lr = parse_double(key, value);
  else if (key == "batch_size") c.batch_size = parse_u64(key, value);
  else if (key == "extractor_steps") c.extractor_steps = parse_u64(key, value);
  else if (key == "qa_steps") c.qa_steps = parse_u64(key, value);
  else if (key == "enable_no_answer") c.enable_no_answer = parse_bool(key, value);
  else if (key == "na_threshold") c.na_threshold = parse_double(key, value);
  else if (key == "na_label_one_means_unanswerable")
    c.na_label_one_means_unanswerable = parse_bool(key, value);
  else throw ValidationError("unknown config key '" + key + "'");
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path.string());
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected key = value");
    apply_override(c, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (d_h == 0 || vocab == 0 || max_tokens == 0)
    throw ValidationError("encoder dimensions must be positive");
  if (heads == 0 || d_h % heads != 0)
    throw ValidationError("heads must be positive and divide d_h");
  if (gat_layers == 0) throw ValidationError("gat_layers must be positive");
  if (k == 0) throw ValidationError("k must be positive");
  if (beam == 0) throw ValidationError("beam must be positive");
  if (max_answer_tokens == 0) throw ValidationError("max_answer_tokens must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (lr <= 0.0) throw ValidationError("lr must be positive");
  if (f <= 0.0) throw ValidationError("f must be positive");
  if (na_threshold < 0.0 || na_threshold > 1.0)
    throw ValidationError("na_threshold must lie in [0, 1]");
}

std::string RunConfig::to_string() const {
  std::ostringstream ss;
  ss << "seed = " << seed << "\n"
     << "d_h = " << d_h << "\n"
     << "mixing_layers = " << mixing_layers << "\n"
     << "vocab = " << vocab << "\n"
     << "window_radius = " << window_radius << "\n"
     << "position_scale = " << position_scale << "\n"
     << "max_tokens = " << max_tokens << "\n"
     << "m = " << m << "\n"
     << "k = " << k << "\n"
     << "k_w = " << k_w << "\n"
     << "heads = " << heads << "\n"
     << "gat_layers = " << gat_layers << "\n"
     << "leaky_slope = " << leaky_slope << "\n"
     << "f = " << f << "\n"
     << "beam = " << beam << "\n"
     << "max_answer_tokens = " << max_answer_tokens << "\n"
     << "lr = " << lr << "\n"
     << "batch_size = " << batch_size << "\n"
     << "extractor_steps = " << extractor_steps << "\n"
     << "qa_steps = " << qa_steps << "\n"
     << "enable_no_answer = " << (enable_no_answer ? "true" : "false") << "\n"
     << "na_threshold = " << na_threshold << "\n"
     << "na_label_one_means_unanswerable = "
     << (na_label_one_means_unanswerable ? "true" : "false") << "\n";
  return ss.str();
}

}  // namespace quisg::cfg
