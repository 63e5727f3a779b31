#pragma once

#include "coarsemom/gauss.hpp"
#include "coarsemom/rng.hpp"
#include "coarsemom/parallel.hpp"
#include "coarsemom/model.hpp"
#include "coarsemom/residuals.hpp"
#include "coarsemom/cutpoints.hpp"
#include "coarsemom/gmm.hpp"
#include "coarsemom/latent.hpp"
#include "coarsemom/post.hpp"
#include "coarsemom/datagen.hpp"
#include "coarsemom/oracle.hpp"
#include "coarsemom/io.hpp"
