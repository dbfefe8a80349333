#pragma once

#include "wvae/artifacts.hpp"
#include "wvae/classifier.hpp"
#include "wvae/common.hpp"
#include "wvae/dataset.hpp"
#include "wvae/gaussian.hpp"
#include "wvae/metrics.hpp"
#include "wvae/runlog.hpp"
#include "wvae/scheduler.hpp"
#include "wvae/synth.hpp"
#include "wvae/tensor.hpp"
#include "wvae/vae.hpp"
