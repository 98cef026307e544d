#pragma once

#include <string>
#include <vector>

namespace gm {

int levenshtein(const std::u32string& a, const std::u32string& b);
int levenshtein_tokens(const std::vector<std::u32string>& a, const std::vector<std::u32string>& b);

// edit distance / reference length; reference must be non-empty
double cer(const std::u32string& gt, const std::u32string& pred);
// token-level distance / reference token count; reference must tokenize non-empty
double wer(const std::u32string& gt, const std::u32string& pred);

// mean of the per-sample rates (not a pooled ratio); lists must be equal length
double cer(const std::vector<std::u32string>& gt, const std::vector<std::u32string>& pred);
double wer(const std::vector<std::u32string>& gt, const std::vector<std::u32string>& pred);

}  // namespace gm
