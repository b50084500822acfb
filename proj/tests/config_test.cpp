#include <doctest.h>

#include <fstream>
#include <map>

#include "test_util.hpp"
#include "warp2/error.hpp"
#include "warp2/server_config.hpp"

using namespace warp2;
using namespace warp2::testing;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

}  // namespace

TEST_CASE("parse_listen") {
    CHECK(parse_listen("0.0.0.0:9000") == std::pair<std::string, int>{"0.0.0.0", 9000});
    CHECK(parse_listen("[::1]:80") == std::pair<std::string, int>{"::1", 80});
    for (const char* bad : {"nohost", ":80", "host:", "host:99999", "host:x"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_listen(bad), Error);
    }
}

TEST_CASE("server config precedence") {
    TempDir dir;
    ServerConfig defaults = load_server_config(std::nullopt, fake_env({}));
    CHECK(defaults.host == "127.0.0.1");
    CHECK(defaults.port == 8080);
    CHECK(defaults.limits.page_limit == 1000);
    CHECK(defaults.limits.uploads_per_minute == 60);

    auto file = dir / "server.json";
    std::ofstream(file) << R"({"listen": "0.0.0.0:7000", "page_limit": 50, "upload_rate": 5, "inbox_dir": "/srv/in"})";
    ServerConfig from_file = load_server_config(file, fake_env({}));
    CHECK(from_file.host == "0.0.0.0");
    CHECK(from_file.port == 7000);
    CHECK(from_file.limits.page_limit == 50);
    CHECK(from_file.limits.uploads_per_minute == 5);
    CHECK(from_file.data_dir == "/srv/in");

    ServerConfig env = load_server_config(file, fake_env({{"WARP2_PAGE_LIMIT", "20"}, {"WARP2_LISTEN", "127.0.0.1:1"}}));
    CHECK(env.limits.page_limit == 20);
    CHECK(env.port == 1);
    CHECK(env.limits.uploads_per_minute == 5);

    CHECK_THROWS_AS(load_server_config(file, fake_env({{"WARP2_PAGE_LIMIT", "lots"}})), Error);
    std::ofstream(file) << "not json";
    CHECK_THROWS_AS(load_server_config(file, fake_env({})), Error);
    CHECK_THROWS_AS(load_server_config(dir / "missing.json", fake_env({})), Error);
}
