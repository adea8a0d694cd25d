#include "responder.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>

#include "json.hpp"

namespace prefmem::cli {

namespace {

std::string percent(double p) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.0f%%", 100.0 * p);
    return buf;
}

}  // namespace

std::optional<std::string> BuiltinResponder::respond(const ResponderQuery& q) {
    if (q.categories.empty()) return "Okay.";
    const auto& [top, p] = q.categories.front();
    if (q.preference) return "Noted — you prefer " + top + ".";
    return "Okay. (remembered preference: " + top + ", " + percent(p) + ")";
}

ExternalResponder::~ExternalResponder() { stop(); }

std::unique_ptr<ExternalResponder> ExternalResponder::start(const std::string& command,
                                                            const std::vector<std::string>& categories, int timeout_ms,
                                                            std::string& error) {
    // A dead child must surface as a write error, not kill the REPL.
    ::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0) {
        error = std::string("pipe: ") + std::strerror(errno);
        return nullptr;
    }
    if (::pipe(out_pipe) != 0) {
        error = std::string("pipe: ") + std::strerror(errno);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        return nullptr;
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        error = std::string("fork: ") + std::strerror(errno);
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        return nullptr;
    }
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);

    std::unique_ptr<ExternalResponder> r(new ExternalResponder());
    r->pid_ = pid;
    r->to_child_ = in_pipe[1];
    r->from_child_ = out_pipe[0];
    r->timeout_ms_ = timeout_ms;

    nlohmann::ordered_json hello;
    hello["type"] = "handshake";
    hello["text"] = "prefmem/1";
    hello["soft_prompt"] = nlohmann::ordered_json::array();
    hello["categories"] = categories;
    if (!r->send(hello.dump())) {
        error = "could not send handshake";
        return nullptr;
    }
    const auto reply = r->receive();
    if (!reply) {
        error = "no handshake reply within " + std::to_string(timeout_ms) + " ms";
        return nullptr;
    }
    const auto j = nlohmann::json::parse(*reply, nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("type", "") != "handshake") {
        error = "bad handshake reply: " + reply->substr(0, 80);
        return nullptr;
    }
    return r;
}

bool ExternalResponder::send(const std::string& line) {
    if (to_child_ < 0) return false;
    std::string data = line + '\n';
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        off += static_cast<std::size_t>(n);
    }
    return true;
}

std::optional<std::string> ExternalResponder::receive() {
    if (from_child_ < 0) return std::nullopt;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        pollfd pfd{from_child_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (ready < 0 && errno == EINTR) continue;
        if (ready <= 0) return std::nullopt;
        char chunk[4096];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return std::nullopt;  // EOF: child exited
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::optional<std::string> ExternalResponder::respond(const ResponderQuery& q) {
    nlohmann::ordered_json msg;
    msg["type"] = "query";
    msg["text"] = q.text;
    msg["soft_prompt"] = q.soft_prompt.raw();
    auto cats = nlohmann::ordered_json::array();
    for (const auto& [name, p] : q.categories) cats.push_back({{"name", name}, {"p", p}});
    msg["categories"] = std::move(cats);
    std::optional<std::string> text;
    if (send(msg.dump())) {
        if (const auto reply = receive()) {
            const auto j = nlohmann::json::parse(*reply, nullptr, false);
            if (!j.is_discarded() && j.is_object() && j.value("type", "") == "response" && j.contains("text") &&
                j.at("text").is_string()) {
                text = j.at("text").get<std::string>();
            }
        }
    }
    if (!text) stop();
    return text;
}

void ExternalResponder::stop() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
        // Give a well-behaved child a moment to exit on EOF before killing it.
        for (int i = 0; i < 20; ++i) {
            if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            ::usleep(5000);
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
        pid_ = -1;
    }
}

ResponderAdapter::ResponderAdapter(const std::string& mode, const std::string& command,
                                   const std::vector<std::string>& categories, int timeout_ms) {
    if (mode != "external") return;
    std::string error;
    external_ = ExternalResponder::start(command, categories, timeout_ms, error);
    if (!external_) warnings_.push_back("external responder unavailable (" + error + "); using builtin responder");
}

std::string ResponderAdapter::respond(const ResponderQuery& q) {
    if (external_) {
        if (auto text = external_->respond(q)) return *text;
        external_.reset();
        warnings_.push_back("external responder failed; using builtin responder from now on");
    }
    return *builtin_.respond(q);
}

}  // namespace prefmem::cli
