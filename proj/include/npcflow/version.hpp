#pragma once

namespace npcflow {

inline constexpr const char* version = "0.1.0";

}
