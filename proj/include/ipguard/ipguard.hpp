#pragma once

#include "ipguard/data.hpp"
#include "ipguard/error.hpp"
#include "ipguard/experiment.hpp"
#include "ipguard/fingerprint.hpp"
#include "ipguard/forest.hpp"
#include "ipguard/metrics.hpp"
#include "ipguard/model_io.hpp"
#include "ipguard/nn.hpp"
#include "ipguard/objectives.hpp"
#include "ipguard/oracle.hpp"
#include "ipguard/parallel.hpp"
#include "ipguard/random.hpp"
#include "ipguard/remote_oracle.hpp"
#include "ipguard/suspects.hpp"
#include "ipguard/train.hpp"
#include "ipguard/verify.hpp"
