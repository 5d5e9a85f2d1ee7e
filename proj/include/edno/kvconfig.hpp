#ifndef EDNO_KVCONFIG_HPP
#define EDNO_KVCONFIG_HPP

#include <map>
#include <string>

namespace edno {

/// key=value text, one pair per line; '#' starts a comment.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv(const std::string& text);
KvMap load_kv_file(const std::string& path);
std::string serialize_kv(const KvMap& kv);

int64_t kv_int(const KvMap& kv, const std::string& key, int64_t fallback);
double kv_double(const KvMap& kv, const std::string& key, double fallback);
bool kv_bool(const KvMap& kv, const std::string& key, bool fallback);
std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback);

} // namespace edno

#endif
