#pragma once

// Umbrella header for the scripted fraud-simulation sandbox. The CLI
// front-end (cli.hpp) and the HTTP backend client (external_backend.hpp)
// are opt-in includes because they pull in heavier vendored dependencies.

#include "shadowsim/cards.hpp"
#include "shadowsim/defense.hpp"
#include "shadowsim/errors.hpp"
#include "shadowsim/events.hpp"
#include "shadowsim/genbackend.hpp"
#include "shadowsim/harness.hpp"
#include "shadowsim/perpetrator.hpp"
#include "shadowsim/platform.hpp"
#include "shadowsim/util.hpp"
