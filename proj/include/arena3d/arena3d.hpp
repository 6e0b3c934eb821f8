#pragma once

#include "arena3d/analytics.hpp"
#include "arena3d/binomial.hpp"
#include "arena3d/bootstrap.hpp"
#include "arena3d/bradley_terry.hpp"
#include "arena3d/config.hpp"
#include "arena3d/content_store.hpp"
#include "arena3d/domain.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/error.hpp"
#include "arena3d/export.hpp"
#include "arena3d/fraud.hpp"
#include "arena3d/identity.hpp"
#include "arena3d/leaderboard.hpp"
#include "arena3d/random.hpp"
#include "arena3d/scheduler.hpp"
#include "arena3d/service.hpp"
#include "arena3d/simulator.hpp"
#include "arena3d/stats.hpp"
#include "arena3d/time.hpp"
#include "arena3d/vote_store.hpp"
