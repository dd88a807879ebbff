package com.example.geo;

public class Range {
    private final int low;
    private final int high;

    public Range(int low, int high) {
        this.low = low;
        this.high = high;
    }

    public boolean contains(int x) {
        return low <= x && x <= high;
    }

    public int width() {
        return high - low;
    }
}
