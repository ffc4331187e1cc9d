/// @file vortex_mixer.hpp
/// @brief Umbrella header: model, integrator, tangent processes, coupling,
///        diagnostics and the run layer.
#pragma once

#include "vortex_mixer/lattice.hpp"
#include "vortex_mixer/spectral_field.hpp"
#include "vortex_mixer/transform.hpp"
#include "vortex_mixer/nonlinearity.hpp"
#include "vortex_mixer/noise_model.hpp"
#include "vortex_mixer/rng.hpp"
#include "vortex_mixer/stats.hpp"
#include "vortex_mixer/integrator.hpp"
#include "vortex_mixer/model.hpp"
#include "vortex_mixer/ensemble.hpp"
#include "vortex_mixer/malliavin.hpp"
#include "vortex_mixer/distance.hpp"
#include "vortex_mixer/coupling.hpp"
#include "vortex_mixer/diagnostics.hpp"
#include "vortex_mixer/config.hpp"
#include "vortex_mixer/output.hpp"
#include "vortex_mixer/runner.hpp"
