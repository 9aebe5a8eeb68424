// First 32 unscrambled Sobol' points (Joe-Kuo directions) from scipy.stats.qmc.Sobol,
// columns 1, 2, 3, 4, 5, 100, 501 and 1024 of the 1024-dimensional sequence.
#pragma once

inline constexpr int kSobolFixtureColumns[8] = {0, 1, 2, 3, 4, 99, 500, 1023};
inline constexpr double kSobolFixture[32][8] = {
    {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5},
    {0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75},
    {0.25, 0.75, 0.75, 0.75, 0.25, 0.25, 0.75, 0.25},
    {0.375, 0.375, 0.625, 0.875, 0.375, 0.875, 0.375, 0.875},
    {0.875, 0.875, 0.125, 0.375, 0.875, 0.375, 0.875, 0.375},
    {0.625, 0.125, 0.875, 0.625, 0.625, 0.125, 0.125, 0.125},
    {0.125, 0.625, 0.375, 0.125, 0.125, 0.625, 0.625, 0.625},
    {0.1875, 0.3125, 0.9375, 0.4375, 0.5625, 0.9375, 0.6875, 0.0625},
    {0.6875, 0.8125, 0.4375, 0.9375, 0.0625, 0.4375, 0.1875, 0.5625},
    {0.9375, 0.0625, 0.6875, 0.1875, 0.3125, 0.1875, 0.9375, 0.8125},
    {0.4375, 0.5625, 0.1875, 0.6875, 0.8125, 0.6875, 0.4375, 0.3125},
    {0.3125, 0.1875, 0.3125, 0.5625, 0.9375, 0.0625, 0.8125, 0.9375},
    {0.8125, 0.6875, 0.8125, 0.0625, 0.4375, 0.5625, 0.3125, 0.4375},
    {0.5625, 0.4375, 0.0625, 0.8125, 0.1875, 0.8125, 0.5625, 0.1875},
    {0.0625, 0.9375, 0.5625, 0.3125, 0.6875, 0.3125, 0.0625, 0.6875},
    {0.09375, 0.46875, 0.46875, 0.65625, 0.28125, 0.03125, 0.46875, 0.90625},
    {0.59375, 0.96875, 0.96875, 0.15625, 0.78125, 0.53125, 0.96875, 0.40625},
    {0.84375, 0.21875, 0.21875, 0.90625, 0.53125, 0.78125, 0.21875, 0.15625},
    {0.34375, 0.71875, 0.71875, 0.40625, 0.03125, 0.28125, 0.71875, 0.65625},
    {0.46875, 0.09375, 0.84375, 0.28125, 0.15625, 0.90625, 0.09375, 0.03125},
    {0.96875, 0.59375, 0.34375, 0.78125, 0.65625, 0.40625, 0.59375, 0.53125},
    {0.71875, 0.34375, 0.59375, 0.03125, 0.90625, 0.15625, 0.34375, 0.78125},
    {0.21875, 0.84375, 0.09375, 0.53125, 0.40625, 0.65625, 0.84375, 0.28125},
    {0.15625, 0.15625, 0.53125, 0.84375, 0.84375, 0.96875, 0.78125, 0.96875},
    {0.65625, 0.65625, 0.03125, 0.34375, 0.34375, 0.46875, 0.28125, 0.46875},
    {0.90625, 0.40625, 0.78125, 0.59375, 0.09375, 0.21875, 0.53125, 0.21875},
    {0.40625, 0.90625, 0.28125, 0.09375, 0.59375, 0.71875, 0.03125, 0.71875},
    {0.28125, 0.28125, 0.15625, 0.21875, 0.71875, 0.09375, 0.65625, 0.09375},
    {0.78125, 0.78125, 0.65625, 0.71875, 0.21875, 0.59375, 0.15625, 0.59375},
    {0.53125, 0.03125, 0.40625, 0.46875, 0.46875, 0.84375, 0.90625, 0.84375},
    {0.03125, 0.53125, 0.90625, 0.96875, 0.96875, 0.34375, 0.40625, 0.34375},
};
