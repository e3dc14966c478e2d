#include "psan/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace psan {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

long parse_int(const std::string& v, const std::string& key) {
  char* endp = nullptr;
  const long n = std::strtol(v.c_str(), &endp, 10);
  if (endp == v.c_str() || *endp != '\0')
    throw ConfigError("config: '" + key + "' needs an integer, got '" + v +
                      "'");
  return n;
}

double parse_double(const std::string& v, const std::string& key) {
  char* endp = nullptr;
  const double x = std::strtod(v.c_str(), &endp);
  if (endp == v.c_str() || *endp != '\0')
    throw ConfigError("config: '" + key + "' needs a number, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' needs true or false, got '" + v +
                    "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    char* endp = nullptr;
    const unsigned long long s = std::strtoull(item.c_str(), &endp, 10);
    if (endp == item.c_str() || *endp != '\0')
      throw ConfigError("config: bad seed '" + item + "'");
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError("config: 'seeds' is empty");
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr))
    throw ConfigError("config: lr must be a finite non-negative number");
  if (max_epochs < 1) throw ConfigError("config: max_epochs must be positive");
  if (patience < 1) throw ConfigError("config: patience must be positive");
  if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (pad.msg_len < 1 || pad.disc_len < 1)
    throw ConfigError("config: pad lengths must be positive");
  model.validate();
}

std::string TrainConfig::to_string() const {
  std::ostringstream os;
  os << "batch_size=" << batch_size << "\n";
  os << "lr=" << lr << "\n";
  os << "max_epochs=" << max_epochs << "\n";
  os << "patience=" << patience << "\n";
  os << "seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i)
    os << (i ? "," : "") << seeds[i];
  os << "\n";
  os << "msg_len=" << pad.msg_len << "\n";
  os << "disc_len=" << pad.disc_len << "\n";
  os << "heads=" << model.heads << "\n";
  os << "gcn_layers=" << model.gcn_layers << "\n";
  os << "gcn_dim=" << model.gcn_dim << "\n";
  os << "ablation=" << psan::to_string(model.ablation) << "\n";
  os << "share_encoders=" << (model.share_encoders ? "true" : "false") << "\n";
  return os.str();
}

TrainConfig TrainConfig::parse(std::istream& is) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key '" + key + "'");
    if (key == "batch_size")
      cfg.batch_size = static_cast<int>(parse_int(val, key));
    else if (key == "lr")
      cfg.lr = parse_double(val, key);
    else if (key == "max_epochs")
      cfg.max_epochs = static_cast<int>(parse_int(val, key));
    else if (key == "patience")
      cfg.patience = static_cast<int>(parse_int(val, key));
    else if (key == "seeds")
      cfg.seeds = parse_seeds(val);
    else if (key == "msg_len")
      cfg.pad.msg_len = static_cast<int>(parse_int(val, key));
    else if (key == "disc_len")
      cfg.pad.disc_len = static_cast<int>(parse_int(val, key));
    else if (key == "heads")
      cfg.model.heads = static_cast<int>(parse_int(val, key));
    else if (key == "gcn_layers")
      cfg.model.gcn_layers = static_cast<int>(parse_int(val, key));
    else if (key == "gcn_dim")
      cfg.model.gcn_dim = static_cast<int>(parse_int(val, key));
    else if (key == "ablation")
      cfg.model.ablation = ablation_from_string(val);
    else if (key == "share_encoders")
      cfg.model.share_encoders = parse_bool(val, key);
    else
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  return parse(is);
}

}  // namespace psan
