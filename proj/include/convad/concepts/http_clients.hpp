#pragma once

#include <memory>
#include <string>

#include "convad/concepts/vlm.hpp"
#include "json.hpp"

namespace convad::concepts {

struct HttpEndpoint {
    std::string url;  // http://host:port/path
    std::string model;
    std::string token;
    int timeout_seconds = 120;
};

/// OpenAI-style chat-completions client; images travel as base64 PNG data URLs.
class HttpVLMClient : public VLMClient {
public:
    explicit HttpVLMClient(HttpEndpoint endpoint);
    /// CONVAD_VLM_ENDPOINT, CONVAD_VLM_MODEL, CONVAD_VLM_TOKEN; throws std::runtime_error when the endpoint is unset.
    static std::unique_ptr<HttpVLMClient> from_env();

    std::string describe(const Sample& sample, const std::string& prompt) override;
    std::vector<std::string> extract_concepts(const Sample& sample, const std::string& prompt) override;
    std::vector<ConceptGroup> group_concepts(const std::vector<std::string>& terms,
                                             const std::string& prompt) override;
    std::map<std::string, bool> annotate(const Sample& sample, const std::vector<std::string>& vocabulary,
                                         const std::string& prompt) override;

private:
    std::string chat(const std::string& prompt, const Image* image);
    HttpEndpoint ep_;
};

/// OpenAI-style embeddings client. CONVAD_EMBED_ENDPOINT, CONVAD_EMBED_MODEL, CONVAD_VLM_TOKEN.
class HttpTextEmbedder : public TextEmbedder {
public:
    explicit HttpTextEmbedder(HttpEndpoint endpoint);
    static std::unique_ptr<HttpTextEmbedder> from_env();
    std::vector<double> embed(const std::string& term) override;
    [[nodiscard]] int dim() const override { return dim_; }

private:
    HttpEndpoint ep_;
    std::map<std::string, std::vector<double>> cache_;
    int dim_ = 0;
};

/// First JSON value of the given kind ('[' or '{') embedded in free text.
nlohmann::json extract_json(const std::string& text, char open);

/// Splits http://host:port/path into ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url);

}  // namespace convad::concepts
