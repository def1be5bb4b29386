#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "advrep/engine.hpp"

namespace advrep {

// Write-ahead command storage. Every state-changing command is appended
// before it executes; replaying the commands in order rebuilds the engine,
// including its audit chain.
class Storage {
 public:
  virtual ~Storage() = default;
  virtual std::vector<Command> load() = 0;
  virtual void append(const Command& cmd) = 0;
};

class MemoryStorage : public Storage {
 public:
  std::vector<Command> load() override {
    std::lock_guard lock(mu_);
    return commands_;
  }
  void append(const Command& cmd) override {
    std::lock_guard lock(mu_);
    commands_.push_back(cmd);
  }

 private:
  std::mutex mu_;
  std::vector<Command> commands_;
};

// NDJSON file, one command per line, fsync'd per append. A torn final line
// left by a crash is ignored on load and truncated away.
class FileStorage : public Storage {
 public:
  explicit FileStorage(std::string path) : path_(std::move(path)) {}
  ~FileStorage() override {
    if (fd_ >= 0) ::close(fd_);
  }
  FileStorage(const FileStorage&) = delete;
  FileStorage& operator=(const FileStorage&) = delete;

  std::vector<Command> load() override {
    std::lock_guard lock(mu_);
    std::vector<Command> out;
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    std::size_t good_bytes = 0;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
      const bool complete = !in.eof();
      offset += line.size() + (complete ? 1 : 0);
      if (!complete) break;
      if (line.empty()) {
        good_bytes = offset;
        continue;
      }
      try {
        out.push_back(json::parse(line).get<Command>());
        good_bytes = offset;
      } catch (const json::exception&) {
        break;
      }
    }
    in.close();
    open_for_append(good_bytes);
    return out;
  }

  void append(const Command& cmd) override {
    std::lock_guard lock(mu_);
    if (fd_ < 0) open_for_append(std::nullopt);
    const auto line = json(cmd).dump() + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
      const auto n = ::write(fd_, line.data() + written, line.size() - written);
      if (n < 0) throw Error(errc::kConfig, "journal write failed: " + path_);
      written += static_cast<std::size_t>(n);
    }
    ::fsync(fd_);
  }

 private:
  void open_for_append(std::optional<std::size_t> truncate_to) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0600);
    if (fd_ < 0) throw Error(errc::kConfig, "cannot open journal " + path_);
    if (truncate_to && ::ftruncate(fd_, static_cast<off_t>(*truncate_to)) != 0)
      throw Error(errc::kConfig, "cannot truncate journal " + path_);
  }

  std::string path_;
  std::mutex mu_;
  int fd_ = -1;
};

// An engine behind its journal. Read-only commands bypass the journal.
class DurableEngine {
 public:
  DurableEngine(std::unique_ptr<Engine> engine, std::unique_ptr<Storage> storage)
      : engine_(std::move(engine)), storage_(std::move(storage)) {}

  // Re-executes persisted commands; failures replay as failures.
  std::size_t replay() {
    std::lock_guard lock(mu_);
    const auto commands = storage_->load();
    for (const auto& cmd : commands) {
      try {
        engine_->execute(cmd);
      } catch (const std::exception&) {
      }
    }
    return commands.size();
  }

  json execute(const Command& cmd) {
    if (is_read_only(cmd.op)) return engine_->execute(cmd);
    // The journal order must equal execution order.
    std::lock_guard lock(mu_);
    storage_->append(cmd);
    return engine_->execute(cmd);
  }

  Engine& engine() { return *engine_; }

 private:
  std::unique_ptr<Engine> engine_;
  std::unique_ptr<Storage> storage_;
  std::mutex mu_;
};

}  // namespace advrep
