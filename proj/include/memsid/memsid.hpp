#ifndef MEMSID_MEMSID_HPP
#define MEMSID_MEMSID_HPP

// Umbrella header: the whole identification pipeline in one include.

#include <memsid/units.hpp>
#include <memsid/rng.hpp>
#include <memsid/plate.hpp>
#include <memsid/surrogate.hpp>
#include <memsid/serialize.hpp>
#include <memsid/response.hpp>
#include <memsid/peaks.hpp>
#include <memsid/identify.hpp>
#include <memsid/statics.hpp>
#include <memsid/wafer.hpp>

#endif  // MEMSID_MEMSID_HPP
