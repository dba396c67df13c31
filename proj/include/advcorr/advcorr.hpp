#pragma once

#include "advcorr/attacks.hpp"
#include "advcorr/cuts.hpp"
#include "advcorr/data_io.hpp"
#include "advcorr/errors.hpp"
#include "advcorr/finetune.hpp"
#include "advcorr/nn.hpp"
#include "advcorr/qp.hpp"
#include "advcorr/trainer.hpp"
#include "advcorr/violation.hpp"
#include "advcorr/harness.hpp"
