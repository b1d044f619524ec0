#pragma once

#include "refmine/chunker.hpp"
#include "refmine/corpus.hpp"
#include "refmine/crf.hpp"
#include "refmine/error.hpp"
#include "refmine/eval.hpp"
#include "refmine/extract.hpp"
#include "refmine/lbfgs.hpp"
#include "refmine/matcher.hpp"
#include "refmine/parallel.hpp"
#include "refmine/pipeline.hpp"
#include "refmine/refparse.hpp"
#include "refmine/unicode.hpp"
