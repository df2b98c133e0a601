#include "convad/concepts/http_clients.hpp"

#include <cmath>
#include <cstdlib>

#include "convad/core/png_io.hpp"
#include "httplib.h"
#include "json.hpp"

namespace convad::concepts {
namespace {

std::string env_or(const char* name, const std::string& fallback = {}) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

nlohmann::json post_json(const HttpEndpoint& ep, const nlohmann::json& body) {
    const auto [base, path] = split_url(ep.url);
    httplib::Client cli(base);
    cli.set_read_timeout(ep.timeout_seconds, 0);
    cli.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (!ep.token.empty()) headers.emplace("Authorization", "Bearer " + ep.token);
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) throw VlmError("request to " + ep.url + " failed: " + httplib::to_string(res.error()), true);
    if (res->status != 200)
        throw VlmError("request to " + ep.url + " returned HTTP " + std::to_string(res->status), res->status >= 500 ||
                                                                                                  res->status == 429);
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw VlmError(std::string("malformed JSON response: ") + e.what(), false);
    }
}

}  // namespace

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw std::invalid_argument("endpoint URL needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

nlohmann::json extract_json(const std::string& text, char open) {
    const char close = open == '[' ? ']' : '}';
    const auto b = text.find(open);
    const auto e = text.rfind(close);
    if (b == std::string::npos || e == std::string::npos || e < b)
        throw VlmError(std::string("reply holds no JSON ") + (open == '[' ? "array" : "object"), false);
    try {
        return nlohmann::json::parse(text.substr(b, e - b + 1));
    } catch (const nlohmann::json::exception& ex) {
        throw VlmError(std::string("reply holds malformed JSON: ") + ex.what(), false);
    }
}

HttpVLMClient::HttpVLMClient(HttpEndpoint endpoint) : ep_(std::move(endpoint)) { (void)split_url(ep_.url); }

std::unique_ptr<HttpVLMClient> HttpVLMClient::from_env() {
    HttpEndpoint ep{env_or("CONVAD_VLM_ENDPOINT"), env_or("CONVAD_VLM_MODEL", "gemma3"), env_or("CONVAD_VLM_TOKEN")};
    if (ep.url.empty()) throw std::runtime_error("CONVAD_VLM_ENDPOINT is not set");
    return std::make_unique<HttpVLMClient>(std::move(ep));
}

std::string HttpVLMClient::chat(const std::string& prompt, const Image* image) {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    if (image) {
        const std::string url = "data:image/png;base64," + httplib::detail::base64_encode(png::encode_rgb(*image));
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
    }
    const nlohmann::json body = {{"model", ep_.model},
                                 {"temperature", 0},
                                 {"messages", {{{"role", "user"}, {"content", content}}}}};
    const auto reply = post_json(ep_, body);
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw VlmError(std::string("unexpected chat response: ") + e.what(), false);
    }
}

std::string HttpVLMClient::describe(const Sample& sample, const std::string& prompt) {
    return chat(prompt, &sample.image);
}

std::vector<std::string> HttpVLMClient::extract_concepts(const Sample& sample, const std::string& prompt) {
    auto terms = extract_json(chat(prompt, &sample.image), '[').get<std::vector<std::string>>();
    if (terms.size() > kMaxConceptsPerImage) terms.resize(kMaxConceptsPerImage);
    return terms;
}

std::vector<ConceptGroup> HttpVLMClient::group_concepts(const std::vector<std::string>&, const std::string& prompt) {
    const auto obj = extract_json(chat(prompt, nullptr), '{');
    std::vector<ConceptGroup> groups;
    for (const auto& [name, members] : obj.items()) groups.push_back({name, members.get<std::vector<std::string>>()});
    return groups;
}

std::map<std::string, bool> HttpVLMClient::annotate(const Sample& sample, const std::vector<std::string>&,
                                                    const std::string& prompt) {
    return extract_json(chat(prompt, &sample.image), '{').get<std::map<std::string, bool>>();
}

HttpTextEmbedder::HttpTextEmbedder(HttpEndpoint endpoint) : ep_(std::move(endpoint)) { (void)split_url(ep_.url); }

std::unique_ptr<HttpTextEmbedder> HttpTextEmbedder::from_env() {
    HttpEndpoint ep{env_or("CONVAD_EMBED_ENDPOINT"), env_or("CONVAD_EMBED_MODEL", "clip-vit-b-32"),
                    env_or("CONVAD_VLM_TOKEN")};
    if (ep.url.empty()) throw std::runtime_error("CONVAD_EMBED_ENDPOINT is not set");
    return std::make_unique<HttpTextEmbedder>(std::move(ep));
}

std::vector<double> HttpTextEmbedder::embed(const std::string& term) {
    if (auto it = cache_.find(term); it != cache_.end()) return it->second;
    const auto reply = post_json(ep_, {{"model", ep_.model}, {"input", term}});
    std::vector<double> v;
    try {
        v = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw VlmError(std::string("unexpected embedding response: ") + e.what(), false);
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    if (v.empty() || norm == 0) throw VlmError("embedding of '" + term + "' is empty or zero", false);
    if (dim_ != 0 && static_cast<int>(v.size()) != dim_) throw VlmError("embedding dimension changed", false);
    dim_ = static_cast<int>(v.size());
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    cache_[term] = v;
    return v;
}

}  // namespace convad::concepts
