package com.example.stats;

import com.example.geo.Range;
import java.util.ArrayList;
import java.util.List;

public class Histogram {
    private final List<Range> bins = new ArrayList<>();

    public void add(Range bin) {
        bins.add(bin);
    }

    public int size() {
        return bins.size();
    }
}
