#pragma once

// JSON codecs shared by the session event log and the HTTP front end.

#include <json.hpp>

#include "iqs/session_service.hpp"

namespace iqs::detail {

using Json = nlohmann::ordered_json;

/// Throws ValidationError naming every malformed field.
CreateSessionRequest request_from_json(const Json& j);
Json request_to_json(const CreateSessionRequest& r);

Json doc_to_json(const ResultDoc& d);
/// Throws std::runtime_error on a malformed document.
ResultDoc doc_from_json(const Json& j, const TextPipeline& pipeline);

Json queue_to_json(const std::vector<QueueEntry>& entries);
std::vector<QueueEntry> queue_from_json(const Json& j);

Json snapshot_to_json(const SessionSnapshot& s);
Json batch_to_json(const BatchView& b);

}  // namespace iqs::detail
