#pragma once

// Stand-ins for the downstream language model that receives the soft prompt.
//
// External wire format, one JSON object per line:
//   -> {"type":"handshake","text":"prefmem/1","soft_prompt":[],"categories":["food",...]}
//   <- {"type":"handshake", ...}
//   -> {"type":"query","text":<user line>,"soft_prompt":[T_1,...],"categories":[{"name":..,"p":..},...]}
//   <- {"type":"response","text":<reply>}

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prefmem/numerics.hpp"

namespace prefmem::cli {

struct ResponderQuery {
    std::string text;
    bool preference = false;
    Vector soft_prompt;
    // Sorted by decreasing probability.
    std::vector<std::pair<std::string, double>> categories;
};

class Responder {
public:
    virtual ~Responder() = default;
    virtual std::string name() const = 0;
    // nullopt when the responder failed; the caller falls back.
    virtual std::optional<std::string> respond(const ResponderQuery& q) = 0;
};

// Verbalizes the category probe.
class BuiltinResponder final : public Responder {
public:
    std::string name() const override { return "builtin"; }
    std::optional<std::string> respond(const ResponderQuery& q) override;
};

// Child process started with /bin/sh -c <command>, spoken to over its
// stdin/stdout.
class ExternalResponder final : public Responder {
public:
    ~ExternalResponder() override;
    ExternalResponder(const ExternalResponder&) = delete;
    ExternalResponder& operator=(const ExternalResponder&) = delete;

    // Starts the process and completes the handshake; nullptr (with `error`
    // set) if either fails.
    static std::unique_ptr<ExternalResponder> start(const std::string& command, const std::vector<std::string>& categories,
                                                    int timeout_ms, std::string& error);

    std::string name() const override { return "external"; }
    // One request line out, one response line in. Any failure (timeout,
    // malformed JSON, wrong type, dead child) returns nullopt and stops the
    // process for good.
    std::optional<std::string> respond(const ResponderQuery& q) override;

private:
    ExternalResponder() = default;
    bool send(const std::string& line);
    std::optional<std::string> receive();
    void stop();

    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    int timeout_ms_ = 5000;
    std::string buffer_;
};

// Tries the configured responder and keeps the builtin one as the fallback.
class ResponderAdapter {
public:
    // mode "builtin" or "external". A failed handshake leaves the adapter on
    // the builtin responder and records a warning.
    ResponderAdapter(const std::string& mode, const std::string& command, const std::vector<std::string>& categories,
                     int timeout_ms);

    std::string active() const { return external_ ? external_->name() : builtin_.name(); }
    std::string respond(const ResponderQuery& q);

    // Warnings produced since the last call.
    std::vector<std::string> take_warnings() { return std::exchange(warnings_, {}); }

private:
    BuiltinResponder builtin_;
    std::unique_ptr<ExternalResponder> external_;
    std::vector<std::string> warnings_;
};

}  // namespace prefmem::cli
