// SPDX-License-Identifier: Apache-2.0
//
// difflink: simulation and training of diffractive metasurface transceivers
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------


#ifndef DIFFLINK_DIFFLINK_HPP
#define DIFFLINK_DIFFLINK_HPP

#include "difflink/bench.hpp"
#include "difflink/channel.hpp"
#include "difflink/checkpoint.hpp"
#include "difflink/config.hpp"
#include "difflink/core.hpp"
#include "difflink/diffraction.hpp"
#include "difflink/evaluation.hpp"
#include "difflink/fft.hpp"
#include "difflink/parallel.hpp"
#include "difflink/rng.hpp"
#include "difflink/training.hpp"
#include "difflink/transceiver.hpp"

#endif
