#pragma once

#include <string>

#include "aden/density.hpp"
#include "aden/errors.hpp"
#include "aden/rotmath.hpp"
#include "aden/synthdata.hpp"
#include "aden/trainer.hpp"

namespace aden {

/// {"q":[w,x,y,z],"t":[x,y,z]}, quaternion in canonical sign form.
std::string pose_to_json(const Pose& p);
Pose pose_from_json(const std::string& text);

std::string kde_to_json(const KdeModel& m);
KdeModel kde_from_json(const std::string& text);
std::string mixture_to_json(const MixtureModel& m);
MixtureModel mixture_from_json(const std::string& text);

std::string episode_to_json(const Episode& ep);
Episode episode_from_json(const std::string& text);

/// Parameters (flat row-major arrays), layer specs, Adam moments and step,
/// run config with its hash, training history.
std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
/// Throws FormatError when the file is missing or malformed.
Checkpoint load_checkpoint(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace aden
