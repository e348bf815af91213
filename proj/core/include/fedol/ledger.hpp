#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace fedol {

// Counts every client<->server message per protocol phase. The one-shot
// contract is enforced against this record, not against code structure.
class MessageLedger {
 public:
  struct Counts {
    std::size_t uploads = 0;
    std::size_t downloads = 0;
    std::uint64_t upload_bytes = 0;
    std::uint64_t download_bytes = 0;
  };

  void record_upload(std::string_view phase, std::size_t client, std::uint64_t bytes) {
    auto& c = entries_[{std::string(phase), client}];
    c.uploads += 1;
    c.upload_bytes += bytes;
  }

  void record_download(std::string_view phase, std::size_t client, std::uint64_t bytes) {
    auto& c = entries_[{std::string(phase), client}];
    c.downloads += 1;
    c.download_bytes += bytes;
  }

  Counts counts(std::string_view phase, std::size_t client) const {
    auto it = entries_.find({std::string(phase), client});
    return it == entries_.end() ? Counts{} : it->second;
  }

  const std::map<std::pair<std::string, std::size_t>, Counts>& entries() const {
    return entries_;
  }

 private:
  std::map<std::pair<std::string, std::size_t>, Counts> entries_;
};

}  // namespace fedol
