#ifndef GENCACHE_SRC_ASSETS_HPP
#define GENCACHE_SRC_ASSETS_HPP

#include <string_view>

// Text assets compiled in from core/assets and core/data.
namespace gencache::assets {

std::string_view prompt_codegen_declarative();
std::string_view prompt_codegen_script();
std::string_view prompt_validator();
std::string_view bench_catalog();

}  // namespace gencache::assets

#endif  // GENCACHE_SRC_ASSETS_HPP
